#pragma once

#include "advpurify/attacks/attacks.hpp"

#include <initializer_list>
#include <string_view>
#include <vector>

namespace advpurify::attacks::detail {

// Throws ConfigError unless cfg.kind is one of `allowed` and cfg validates.
void require_kind(const AttackConfig& cfg, std::initializer_list<AttackKind> allowed, std::string_view op);
void check_inputs(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y);
std::vector<bool> misclassified(const Classifier& classifier, const ImageBatch& x, const LabelBatch& y);

}  // namespace advpurify::attacks::detail
