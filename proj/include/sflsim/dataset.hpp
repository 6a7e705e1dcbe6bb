#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sflsim/model.hpp"
#include "sflsim/nn.hpp"

namespace sflsim {

// Images as normalized scalars in [0,1] with integer class labels. Pixels
// are stored as float; all arithmetic on them happens in double.
struct LabeledDataset {
    Shape3 shape;
    int num_classes = 0;
    std::vector<float> pixels; // size() * shape.count(), sample-major (c,h,w)
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    int pixel_count() const { return shape.count(); }

    const float* image(std::size_t i) const { return pixels.data() + i * shape.count(); }
    float* image(std::size_t i) { return pixels.data() + i * shape.count(); }

    void push_back(const float* img, int label);
    void append(const LabeledDataset& other);
    LabeledDataset subset(const std::vector<int>& indices) const;
    std::vector<int> label_histogram() const;
    void validate() const; // labels in range, pixels in [0,1]
};

// Assembles a training batch (double precision) from dataset rows.
Batch make_batch(const LabeledDataset& ds, const std::vector<int>& indices);
Batch make_batch(const LabeledDataset& ds, std::size_t begin, std::size_t end);

// In-place batch assembly from a slice of an index vector (reuses buffers).
void fill_batch(const LabeledDataset& ds, const std::vector<int>& order, std::size_t begin,
                std::size_t end, Batch& out);

// --- canonical file formats -------------------------------------------------

// IDX image/label pair (big-endian, magics 0x00000803 / 0x00000801), pixels
// scaled by 1/255.
LabeledDataset load_mnist(const std::string& images_path, const std::string& labels_path);
void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path);

// CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3072 pixels
// in channel-major order.
LabeledDataset load_cifar10(const std::vector<std::string>& batch_files);
// CIFAR-100: 3074-byte records (coarse + fine label); fine labels are kept.
LabeledDataset load_cifar100(const std::string& file);
void write_cifar10(const LabeledDataset& ds, const std::string& file);

// --- synthetic stand-ins ----------------------------------------------------
// Deterministic procedurally rendered datasets in the exact pipeline shapes
// of MNIST (1x28x28, 10 classes) and CIFAR-10 (3x32x32, 10 classes). Used by
// the desk-scale presets when the canonical files are not on disk.

LabeledDataset synth_digits(int count, std::uint64_t seed);
LabeledDataset synth_shapes(int count, std::uint64_t seed);

} // namespace sflsim
