#pragma once

#include "minegan/rng.hpp"
#include "minegan/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

namespace minegan {

// n points x d features plus where they came from.
struct SampleSet {
    Tensor points;
    std::string provenance = "real";
    std::uint64_t seed = 0;
    Shape item_shape;  // per-sample shape before row-major flattening; {d} for vectors

    std::size_t size() const noexcept { return points.rows(); }
    std::size_t dim() const noexcept { return points.cols(); }
};

struct LabeledBatch {
    Tensor points;
    std::vector<std::size_t> labels;
};

struct MixtureComponent {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<double> variance;  // diagonal
};

// Gaussian mixture with diagonal covariances. Component weights must be
// non-negative, sum to one and include at least one positive entry.
class MixtureSpec {
public:
    MixtureSpec() = default;
    explicit MixtureSpec(std::vector<MixtureComponent> components);

    static MixtureSpec from_json(const nlohmann::json& j);
    static MixtureSpec load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    // `modes` equal-weight components evenly spaced on a circle.
    static MixtureSpec ring(std::size_t modes, double radius, double stddev);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t component_count() const noexcept { return components_.size(); }
    const std::vector<MixtureComponent>& components() const noexcept { return components_; }

    LabeledBatch draw(std::size_t n, Rng& rng) const;

private:
    std::vector<MixtureComponent> components_;
    std::size_t dim_ = 0;
};

SampleSet sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed);

// Where training batches come from.
class SampleSource {
public:
    virtual ~SampleSource() = default;
    virtual std::size_t dim() const = 0;
    virtual std::size_t classes() const { return 0; }
    virtual LabeledBatch draw_labeled(std::size_t n, Rng& rng) const = 0;
    Tensor draw(std::size_t n, Rng& rng) const { return draw_labeled(n, rng).points; }
};

class MixtureSource final : public SampleSource {
public:
    explicit MixtureSource(MixtureSpec spec) : spec_(std::move(spec)) {}
    std::size_t dim() const override { return spec_.dim(); }
    std::size_t classes() const override { return spec_.component_count(); }
    LabeledBatch draw_labeled(std::size_t n, Rng& rng) const override { return spec_.draw(n, rng); }
    const MixtureSpec& spec() const noexcept { return spec_; }

private:
    MixtureSpec spec_;
};

// A fixed sample set. Batches are drawn without replacement when the set
// holds at least a batch, with replacement otherwise.
class FiniteSource final : public SampleSource {
public:
    explicit FiniteSource(Tensor points, std::vector<std::size_t> labels = {});
    std::size_t dim() const override { return points_.cols(); }
    std::size_t classes() const override;
    LabeledBatch draw_labeled(std::size_t n, Rng& rng) const override;
    const Tensor& points() const noexcept { return points_; }

private:
    Tensor points_;
    std::vector<std::size_t> labels_;
};

// ---- plain sample files ------------------------------------------------

// CSV with a header row of column names, one sample per line.
void save_csv(const Tensor& points, const std::filesystem::path& path, const std::vector<std::string>& header = {});
Tensor load_csv(const std::filesystem::path& path);

// Reads .csv, IDX (.idx / *-ubyte) or a mixture spec (.json, sampled with n/seed).
SampleSet load_samples(const std::filesystem::path& path, std::size_t n_if_spec, std::uint64_t seed);

// ---- IDX ---------------------------------------------------------------

// IDX (MNIST container) with unsigned-byte payload. Pixels map to [-1, 1]
// via v / 127.5 - 1; the first axis indexes samples and the remaining axes
// are flattened row-major into item_shape.
SampleSet load_idx(const std::filesystem::path& path);
SampleSet parse_idx(std::span<const std::uint8_t> bytes);
void save_idx(const SampleSet& set, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_idx(const SampleSet& set);

} // namespace minegan
