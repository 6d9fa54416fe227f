#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fairseg/trainer.hpp"

namespace fairseg {

std::vector<std::uint8_t> encode_checkpoint(const TrainerState& state);
// Decodes into a fresh state; on any error nothing is returned.
TrainerState decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state);
TrainerState load_checkpoint(const std::filesystem::path& path);

}  // namespace fairseg
