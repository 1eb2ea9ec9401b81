#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "latentdx/cohort.hpp"

namespace latentdx {

inline constexpr std::size_t kEciCategories = 29;

/// Lowercase, underscore-separated Elixhauser category names.
const std::array<std::string_view, kEciCategories>& eci_category_names();
std::optional<std::size_t> eci_category_index(std::string_view name);

enum class EciBand { zero_to_one, two_to_four, five_plus };

std::string_view band_label(EciBand band);
EciBand band_for_score(int score);

/// Vocabulary column -> category pairs; a code may feed several categories.
struct EciMapping {
  std::vector<std::pair<std::size_t, std::size_t>> entries;
  /// Codes in the file that the vocabulary does not contain.
  std::size_t skipped_codes = 0;
};

/// Reads `code,category`. Unknown categories are a DataError.
EciMapping load_eci_mapping(const std::filesystem::path& path, const DiseaseVocabulary& vocabulary);
void write_eci_mapping(const EciMapping& mapping, const DiseaseVocabulary& vocabulary,
                       const std::filesystem::path& path);

/// Category c <- code at position c * max(1, V / 29), while in range.
EciMapping default_eci_mapping(const DiseaseVocabulary& vocabulary);

struct EciProfile {
  std::array<bool, kEciCategories> flags{};
  int score = 0;
  EciBand band = EciBand::zero_to_one;
};

EciProfile eci_profile(std::span<const int> counts, const EciMapping& mapping);
std::vector<EciProfile> eci_profiles(const Cohort& cohort, const EciMapping& mapping);

void write_eci_profiles_csv(const std::vector<EciProfile>& profiles, const Cohort& cohort,
                            const std::filesystem::path& path);

}  // namespace latentdx
