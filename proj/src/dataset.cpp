#include "sflsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sflsim/errors.hpp"

namespace sflsim {

void LabeledDataset::push_back(const float* img, int label) {
    pixels.insert(pixels.end(), img, img + shape.count());
    labels.push_back(label);
}

void LabeledDataset::append(const LabeledDataset& other) {
    if (other.empty()) return;
    if (empty() && pixels.empty()) {
        shape = other.shape;
        num_classes = std::max(num_classes, other.num_classes);
    }
    if (!(other.shape == shape)) throw shape_error("appending dataset with different image shape");
    pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    num_classes = std::max(num_classes, other.num_classes);
}

LabeledDataset LabeledDataset::subset(const std::vector<int>& indices) const {
    LabeledDataset out;
    out.shape = shape;
    out.num_classes = num_classes;
    out.pixels.reserve(indices.size() * static_cast<std::size_t>(shape.count()));
    out.labels.reserve(indices.size());
    for (int i : indices) {
        if (i < 0 || static_cast<std::size_t>(i) >= size())
            throw shape_error("subset index out of range");
        out.push_back(image(static_cast<std::size_t>(i)), labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<int> LabeledDataset::label_histogram() const {
    std::vector<int> h(static_cast<std::size_t>(num_classes), 0);
    for (int l : labels) h.at(static_cast<std::size_t>(l))++;
    return h;
}

void LabeledDataset::validate() const {
    if (pixels.size() != size() * static_cast<std::size_t>(shape.count()))
        throw shape_error("pixel buffer size disagrees with sample count");
    for (int l : labels)
        if (l < 0 || l >= num_classes) throw shape_error("label out of range: " + std::to_string(l));
    for (float p : pixels)
        if (!(p >= 0.0f && p <= 1.0f)) throw shape_error("pixel value outside [0,1]");
}

Batch make_batch(const LabeledDataset& ds, const std::vector<int>& indices) {
    Batch b;
    b.n = static_cast<int>(indices.size());
    b.shape = ds.shape;
    b.x.resize(indices.size() * static_cast<std::size_t>(ds.shape.count()));
    b.y.resize(indices.size());
    const int pc = ds.shape.count();
    for (std::size_t s = 0; s < indices.size(); ++s) {
        const float* img = ds.image(static_cast<std::size_t>(indices[s]));
        double* dst = b.x.data() + s * static_cast<std::size_t>(pc);
        for (int i = 0; i < pc; ++i) dst[i] = static_cast<double>(img[i]);
        b.y[s] = ds.labels[static_cast<std::size_t>(indices[s])];
    }
    return b;
}

Batch make_batch(const LabeledDataset& ds, std::size_t begin, std::size_t end) {
    std::vector<int> idx;
    idx.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx.push_back(static_cast<int>(i));
    return make_batch(ds, idx);
}

void fill_batch(const LabeledDataset& ds, const std::vector<int>& order, std::size_t begin,
                std::size_t end, Batch& out) {
    const int pc = ds.shape.count();
    out.n = static_cast<int>(end - begin);
    out.shape = ds.shape;
    out.x.resize(static_cast<std::size_t>(out.n) * pc);
    out.y.resize(static_cast<std::size_t>(out.n));
    for (std::size_t s = begin; s < end; ++s) {
        const auto row = static_cast<std::size_t>(order[s]);
        const float* img = ds.image(row);
        double* dst = out.x.data() + (s - begin) * static_cast<std::size_t>(pc);
        for (int i = 0; i < pc; ++i) dst[i] = static_cast<double>(img[i]);
        out.y[s - begin] = ds.labels[row];
    }
}

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t off, const std::string& path) {
    if (off + 4 > buf.size())
        throw format_error(path + ": truncated header", static_cast<long long>(off));
    return (std::uint32_t(buf[off]) << 24) | (std::uint32_t(buf[off + 1]) << 16) |
           (std::uint32_t(buf[off + 2]) << 8) | std::uint32_t(buf[off + 3]);
}

void put_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

LabeledDataset load_mnist(const std::string& images_path, const std::string& labels_path) {
    const auto ibuf = read_all(images_path);
    const auto lbuf = read_all(labels_path);

    if (be32(ibuf, 0, images_path) != 0x00000803u)
        throw format_error(images_path + ": bad IDX image magic", 0);
    if (be32(lbuf, 0, labels_path) != 0x00000801u)
        throw format_error(labels_path + ": bad IDX label magic", 0);

    const std::uint32_t n = be32(ibuf, 4, images_path);
    const std::uint32_t rows = be32(ibuf, 8, images_path);
    const std::uint32_t cols = be32(ibuf, 12, images_path);
    const std::uint32_t nl = be32(lbuf, 4, labels_path);
    if (n != nl)
        throw format_error("image count " + std::to_string(n) + " != label count " +
                           std::to_string(nl));

    const std::size_t need_i = 16 + static_cast<std::size_t>(n) * rows * cols;
    if (ibuf.size() < need_i)
        throw format_error(images_path + ": truncated image data",
                           static_cast<long long>(ibuf.size()));
    const std::size_t need_l = 8 + n;
    if (lbuf.size() < need_l)
        throw format_error(labels_path + ": truncated label data",
                           static_cast<long long>(lbuf.size()));

    LabeledDataset ds;
    ds.shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
    ds.num_classes = 10;
    ds.pixels.resize(static_cast<std::size_t>(n) * rows * cols);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < ds.pixels.size(); ++i)
        ds.pixels[i] = static_cast<float>(ibuf[16 + i]) / 255.0f;
    for (std::uint32_t i = 0; i < n; ++i) {
        const int l = lbuf[8 + i];
        if (l > 9) throw format_error(labels_path + ": label byte out of range",
                                      static_cast<long long>(8 + i));
        ds.labels[i] = l;
    }
    return ds;
}

void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    if (ds.shape.c != 1) throw format_error("IDX writer expects single-channel images");
    std::ofstream fi(images_path, std::ios::binary);
    if (!fi) throw format_error("cannot write " + images_path);
    put_be32(fi, 0x00000803u);
    put_be32(fi, static_cast<std::uint32_t>(ds.size()));
    put_be32(fi, static_cast<std::uint32_t>(ds.shape.h));
    put_be32(fi, static_cast<std::uint32_t>(ds.shape.w));
    std::vector<unsigned char> row(static_cast<std::size_t>(ds.shape.count()));
    for (std::size_t s = 0; s < ds.size(); ++s) {
        const float* img = ds.image(s);
        for (std::size_t i = 0; i < row.size(); ++i)
            row[i] = static_cast<unsigned char>(std::lround(img[i] * 255.0f));
        fi.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }

    std::ofstream fl(labels_path, std::ios::binary);
    if (!fl) throw format_error("cannot write " + labels_path);
    put_be32(fl, 0x00000801u);
    put_be32(fl, static_cast<std::uint32_t>(ds.size()));
    for (int l : ds.labels) {
        const char b = static_cast<char>(l);
        fl.write(&b, 1);
    }
}

namespace {

LabeledDataset load_cifar_records(const std::vector<std::string>& files, int label_bytes,
                                  int label_index, int num_classes) {
    const std::size_t rec = static_cast<std::size_t>(label_bytes) + 3072;
    LabeledDataset ds;
    ds.shape = {3, 32, 32};
    ds.num_classes = num_classes;
    for (const auto& path : files) {
        const auto buf = read_all(path);
        if (buf.size() % rec != 0)
            throw format_error(path + ": size not divisible by record length " +
                                   std::to_string(rec),
                               static_cast<long long>(buf.size()));
        const std::size_t n = buf.size() / rec;
        ds.pixels.reserve(ds.pixels.size() + n * 3072);
        ds.labels.reserve(ds.labels.size() + n);
        for (std::size_t r = 0; r < n; ++r) {
            const unsigned char* p = buf.data() + r * rec;
            const int label = p[label_index];
            if (label >= num_classes)
                throw format_error(path + ": label byte out of range",
                                   static_cast<long long>(r * rec + label_index));
            ds.labels.push_back(label);
            for (std::size_t i = 0; i < 3072; ++i)
                ds.pixels.push_back(static_cast<float>(p[label_bytes + i]) / 255.0f);
        }
    }
    return ds;
}

} // namespace

LabeledDataset load_cifar10(const std::vector<std::string>& batch_files) {
    return load_cifar_records(batch_files, 1, 0, 10);
}

LabeledDataset load_cifar100(const std::string& file) {
    return load_cifar_records({file}, 2, 1, 100);
}

void write_cifar10(const LabeledDataset& ds, const std::string& file) {
    if (!(ds.shape == Shape3{3, 32, 32}))
        throw format_error("CIFAR-10 writer expects 3x32x32 images");
    std::ofstream f(file, std::ios::binary);
    if (!f) throw format_error("cannot write " + file);
    for (std::size_t s = 0; s < ds.size(); ++s) {
        const char label = static_cast<char>(ds.labels[s]);
        f.write(&label, 1);
        const float* img = ds.image(s);
        unsigned char row[3072];
        for (int i = 0; i < 3072; ++i)
            row[i] = static_cast<unsigned char>(std::lround(img[i] * 255.0f));
        f.write(reinterpret_cast<const char*>(row), 3072);
    }
}

} // namespace sflsim
