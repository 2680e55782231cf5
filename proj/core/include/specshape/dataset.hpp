#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace specshape::data {

/// forget and retain are the two halves of the training data once an
/// unlearning request has been issued; train is training data before that.
enum class Partition { train, forget, retain, test };

std::string to_string(Partition p);
Partition partition_from_string(const std::string& name);

struct Sample {
    Eigen::VectorXd x;
    int label = 0;
    Partition partition = Partition::train;
};

class LabeledDataset {
public:
    explicit LabeledDataset(int num_classes = 0) : num_classes_(num_classes) {}

    void add(Eigen::VectorXd x, int label, Partition partition);

    [[nodiscard]] int num_classes() const { return num_classes_; }
    [[nodiscard]] std::size_t size() const { return samples_.size(); }
    [[nodiscard]] bool empty() const { return samples_.empty(); }
    [[nodiscard]] Eigen::Index dim() const { return samples_.empty() ? 0 : samples_.front().x.size(); }
    [[nodiscard]] const Sample& operator[](std::size_t i) const { return samples_[i]; }
    [[nodiscard]] Sample& operator[](std::size_t i) { return samples_[i]; }
    [[nodiscard]] auto begin() const { return samples_.begin(); }
    [[nodiscard]] auto end() const { return samples_.end(); }

    [[nodiscard]] LabeledDataset only(Partition p) const;
    /// train, forget and retain samples.
    [[nodiscard]] LabeledDataset training() const;
    [[nodiscard]] LabeledDataset with_label(int label) const;
    [[nodiscard]] LabeledDataset without_label(int label) const;
    [[nodiscard]] LabeledDataset merged(const LabeledDataset& other) const;

private:
    int num_classes_;
    std::vector<Sample> samples_;
};

struct GaussianMixtureSpec {
    std::vector<Eigen::VectorXd> centroids;  // one per class
    std::vector<double> stddevs;             // isotropic, one per class
    int train_per_class = 100;
    int test_per_class = 100;
};

/// Samples tagged train and test.
LabeledDataset gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed);

/// Marks a random `fraction` of the training samples as forget, the rest retain.
LabeledDataset split_forget_random(const LabeledDataset& data, double fraction, std::uint64_t seed);

/// Training samples of class `forget_class` become forget, the rest retain.
LabeledDataset split_forget_class(const LabeledDataset& data, int forget_class);

/// CSV rows: features..., label, partition. No header.
void write_csv(std::ostream& os, const LabeledDataset& data);
LabeledDataset read_csv(std::istream& is, int num_classes);

}  // namespace specshape::data
