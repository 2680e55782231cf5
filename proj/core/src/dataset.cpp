#include "specshape/dataset.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace specshape::data {

std::string to_string(Partition p) {
    switch (p) {
    case Partition::train: return "train";
    case Partition::forget: return "forget";
    case Partition::retain: return "retain";
    case Partition::test: return "test";
    }
    return "unknown";
}

Partition partition_from_string(const std::string& name) {
    if (name == "train") return Partition::train;
    if (name == "forget") return Partition::forget;
    if (name == "retain") return Partition::retain;
    if (name == "test") return Partition::test;
    throw std::invalid_argument("unknown partition '" + name + "'");
}

void LabeledDataset::add(Eigen::VectorXd x, int label, Partition partition) {
    if (label < 0 || label >= num_classes_) {
        std::ostringstream os;
        os << "dataset: label " << label << " outside [0, " << num_classes_ << ")";
        throw std::invalid_argument(os.str());
    }
    if (!samples_.empty() && x.size() != dim())
        throw std::invalid_argument("dataset: inconsistent feature dimension");
    samples_.push_back({std::move(x), label, partition});
}

LabeledDataset LabeledDataset::only(Partition p) const {
    LabeledDataset out(num_classes_);
    for (const auto& s : samples_)
        if (s.partition == p) out.samples_.push_back(s);
    return out;
}

LabeledDataset LabeledDataset::training() const {
    LabeledDataset out(num_classes_);
    for (const auto& s : samples_)
        if (s.partition != Partition::test) out.samples_.push_back(s);
    return out;
}

LabeledDataset LabeledDataset::with_label(int label) const {
    LabeledDataset out(num_classes_);
    for (const auto& s : samples_)
        if (s.label == label) out.samples_.push_back(s);
    return out;
}

LabeledDataset LabeledDataset::without_label(int label) const {
    LabeledDataset out(num_classes_);
    for (const auto& s : samples_)
        if (s.label != label) out.samples_.push_back(s);
    return out;
}

LabeledDataset LabeledDataset::merged(const LabeledDataset& other) const {
    LabeledDataset out(std::max(num_classes_, other.num_classes_));
    out.samples_ = samples_;
    for (const auto& s : other.samples_) out.add(s.x, s.label, s.partition);
    return out;
}

LabeledDataset gaussian_mixture(const GaussianMixtureSpec& spec, std::uint64_t seed) {
    const auto k = spec.centroids.size();
    if (k == 0 || spec.stddevs.size() != k)
        throw std::invalid_argument("gaussian_mixture: need one stddev per centroid");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    LabeledDataset out(static_cast<int>(k));
    auto draw = [&](std::size_t c) {
        Eigen::VectorXd x(spec.centroids[c].size());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = spec.centroids[c](i) + spec.stddevs[c] * normal(rng);
        return x;
    };
    for (std::size_t c = 0; c < k; ++c)
        for (int i = 0; i < spec.train_per_class; ++i) out.add(draw(c), static_cast<int>(c), Partition::train);
    for (std::size_t c = 0; c < k; ++c)
        for (int i = 0; i < spec.test_per_class; ++i) out.add(draw(c), static_cast<int>(c), Partition::test);
    return out;
}

LabeledDataset split_forget_random(const LabeledDataset& data, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("split_forget_random: fraction must lie in [0, 1]");
    std::vector<std::size_t> train;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i].partition != Partition::test) train.push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(train.begin(), train.end(), rng);
    const auto n_forget = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
    LabeledDataset out = data;
    for (std::size_t r = 0; r < train.size(); ++r)
        out[train[r]].partition = r < n_forget ? Partition::forget : Partition::retain;
    return out;
}

LabeledDataset split_forget_class(const LabeledDataset& data, int forget_class) {
    LabeledDataset out = data;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].partition == Partition::test) continue;
        out[i].partition = out[i].label == forget_class ? Partition::forget : Partition::retain;
    }
    return out;
}

void write_csv(std::ostream& os, const LabeledDataset& data) {
    os << std::setprecision(17);
    for (const auto& s : data) {
        for (Eigen::Index i = 0; i < s.x.size(); ++i) os << s.x(i) << ',';
        os << s.label << ',' << to_string(s.partition) << '\n';
    }
}

LabeledDataset read_csv(std::istream& is, int num_classes) {
    LabeledDataset out(num_classes);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 3) {
            std::ostringstream msg;
            msg << "read_csv: line " << line_no << " needs features, label and partition";
            throw std::invalid_argument(msg.str());
        }
        Eigen::VectorXd x(static_cast<Eigen::Index>(fields.size() - 2));
        try {
            for (std::size_t i = 0; i + 2 < fields.size(); ++i) x(static_cast<Eigen::Index>(i)) = std::stod(fields[i]);
            out.add(std::move(x), std::stoi(fields[fields.size() - 2]),
                    partition_from_string(fields.back()));
        } catch (const std::exception& e) {
            std::ostringstream msg;
            msg << "read_csv: line " << line_no << ": " << e.what();
            throw std::invalid_argument(msg.str());
        }
    }
    return out;
}

}  // namespace specshape::data
