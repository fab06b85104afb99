#pragma once

#include <string>
#include <string_view>

namespace moodval {

/// valnet: frame branch only; m_valnet: + mood clip branch;
/// mdelta_valnet: + mood and emotion-change clip branches.
enum class ModelKind { valnet, m_valnet, mdelta_valnet };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);

inline bool has_mood_branch(ModelKind k) { return k != ModelKind::valnet; }
inline bool has_delta_branch(ModelKind k) { return k == ModelKind::mdelta_valnet; }

}  // namespace moodval
