#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "moca/config.hpp"
#include "moca/data.hpp"
#include "moca/errors.hpp"
#include "moca/randkit.hpp"

namespace moca {

// Class means uniform on the radius-R sphere in d_in, examples
// mean + N(0, σ²I), contiguous class blocks per task. Fully determined by
// spec.seed.
TaskStream generate_synthetic(const SyntheticSpec& spec);

// ---- IDX -----------------------------------------------------------------

inline constexpr std::uint32_t kIdxMagicLabels = 0x00000801;
inline constexpr std::uint32_t kIdxMagicImages = 0x00000803;

class IdxError : public Error {
public:
    enum class Kind { bad_magic, truncated_payload, trailing_bytes, size_overflow };
    IdxError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct IdxTensor {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;  // row-major

    std::size_t items() const noexcept { return dims.empty() ? 0 : dims.front(); }
    // Bytes per item (product of the trailing dims).
    std::size_t item_size() const noexcept;
};

// Validates magic, header length and declared sizes against the payload.
// Big-endian header integers. Never reads past the buffer.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
IdxTensor read_idx_file(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor);

// Contiguous class blocks per task; per-class order preserved; pixels
// scaled to [0, 1]. Throws LabelOutOfRange for labels ≥ tasks·classes_per_task
// and ConfigError if a class in range never occurs or counts disagree.
TaskStream build_split_stream(const IdxTensor& train_images, const IdxTensor& train_labels,
                              const IdxTensor& test_images, const IdxTensor& test_labels, std::size_t tasks,
                              std::size_t classes_per_task);

}  // namespace moca
