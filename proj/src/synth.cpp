// Procedural image datasets matching the MNIST and CIFAR-10 pipeline shapes.
// Rendering is fully determined by the seed, so fixtures pinned against these
// generators stay stable.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "sflsim/dataset.hpp"
#include "sflsim/rng.hpp"

namespace sflsim {

namespace {

// 9x6 digit glyphs, rasterized through a random affine map per sample.
const std::array<std::array<const char*, 9>, 10> kGlyphs = {{
    {".####.", "#....#", "#....#", "#....#", "#....#", "#....#", "#....#", "#....#", ".####."},
    {"...#..", "..##..", ".#.#..", "...#..", "...#..", "...#..", "...#..", "...#..", ".#####"},
    {".####.", "#....#", ".....#", ".....#", "....#.", "...#..", "..#...", ".#....", "######"},
    {".####.", "#....#", ".....#", ".....#", "..###.", ".....#", ".....#", "#....#", ".####."},
    {"....#.", "...##.", "..#.#.", ".#..#.", "#...#.", "######", "....#.", "....#.", "....#."},
    {"######", "#.....", "#.....", "#####.", ".....#", ".....#", ".....#", "#....#", ".####."},
    {".####.", "#....#", "#.....", "#.....", "#####.", "#....#", "#....#", "#....#", ".####."},
    {"######", ".....#", "....#.", "....#.", "...#..", "...#..", "..#...", "..#...", "..#..."},
    {".####.", "#....#", "#....#", "#....#", ".####.", "#....#", "#....#", "#....#", ".####."},
    {".####.", "#....#", "#....#", "#....#", ".#####", ".....#", ".....#", "#....#", ".####."},
}};

constexpr int kGlyphH = 9;
constexpr int kGlyphW = 6;

double glyph_sample(int digit, double gy, double gx) {
    // Bilinear sample of the binary glyph; outside counts as blank.
    const auto at = [&](int r, int c) -> double {
        if (r < 0 || r >= kGlyphH || c < 0 || c >= kGlyphW) return 0.0;
        return kGlyphs[static_cast<std::size_t>(digit)][static_cast<std::size_t>(r)][c] == '#'
                   ? 1.0
                   : 0.0;
    };
    const int r0 = static_cast<int>(std::floor(gy));
    const int c0 = static_cast<int>(std::floor(gx));
    const double fy = gy - r0, fx = gx - c0;
    return (1 - fy) * ((1 - fx) * at(r0, c0) + fx * at(r0, c0 + 1)) +
           fy * ((1 - fx) * at(r0 + 1, c0) + fx * at(r0 + 1, c0 + 1));
}

float clamp01(double v) {
    return static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
}

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = h - std::floor(h);
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
    }
    const double m = v - c;
    rgb[0] = r + m;
    rgb[1] = g + m;
    rgb[2] = b + m;
}

} // namespace

LabeledDataset synth_digits(int count, std::uint64_t seed) {
    LabeledDataset ds;
    ds.shape = {1, 28, 28};
    ds.num_classes = 10;
    ds.pixels.resize(static_cast<std::size_t>(count) * 784);
    ds.labels.resize(static_cast<std::size_t>(count));
    Rng rng(seed);

    for (int s = 0; s < count; ++s) {
        const int digit = static_cast<int>(rng.below(10));
        ds.labels[static_cast<std::size_t>(s)] = digit;

        const double theta = rng.uniform(-0.22, 0.22);
        const double scale_y = rng.uniform(0.85, 1.15) * (20.0 / kGlyphH);
        const double scale_x = rng.uniform(0.85, 1.15) * (14.0 / kGlyphW);
        const double shear = rng.uniform(-0.15, 0.15);
        const double tx = rng.uniform(-2.5, 2.5);
        const double ty = rng.uniform(-2.5, 2.5);
        const double intensity = rng.uniform(0.75, 1.0);
        const double ct = std::cos(theta), st = std::sin(theta);

        float* img = ds.image(static_cast<std::size_t>(s));
        for (int y = 0; y < 28; ++y) {
            for (int x = 0; x < 28; ++x) {
                // Invert: canvas -> rotate -> unshear -> unscale -> glyph.
                const double py = y - 13.5 - ty;
                const double px = x - 13.5 - tx;
                const double ry = ct * py + st * px;
                const double rx = -st * py + ct * px;
                const double sy = ry;
                const double sx = rx - shear * ry;
                const double gy = sy / scale_y + (kGlyphH - 1) / 2.0;
                const double gx = sx / scale_x + (kGlyphW - 1) / 2.0;
                double v = intensity * glyph_sample(digit, gy, gx);
                v += rng.normal() * 0.04;
                img[y * 28 + x] = clamp01(v);
            }
        }
    }
    return ds;
}

namespace {

// Signed distance-ish coverage tests for the shape classes.
bool shape_hit(int cls, double ny, double nx, Rng& detail) {
    (void)detail;
    const double r = std::sqrt(ny * ny + nx * nx);
    switch (cls) {
    case 0: return r < 0.62;                                      // disc
    case 1: {                                                     // car: body + wheels
        if (std::abs(nx) < 0.72 && ny > -0.18 && ny < 0.3) return true;
        if (std::abs(nx) < 0.4 && ny > -0.52 && ny <= -0.18) return true;
        const double wy = ny - 0.42;
        const double w1 = std::sqrt((nx + 0.38) * (nx + 0.38) + wy * wy);
        const double w2 = std::sqrt((nx - 0.38) * (nx - 0.38) + wy * wy);
        return w1 < 0.17 || w2 < 0.17;
    }
    case 2: return ny > -0.55 && ny < 0.6 && std::abs(nx) < (ny + 0.55) * 0.58; // triangle
    case 3: return r < 0.66 && r > 0.36;                          // ring
    case 4: return std::abs(nx) < 0.18 || std::abs(ny) < 0.18;    // cross
    case 5: return std::fmod(std::abs(ny * 3.2 + 4.0), 1.0) < 0.45; // horizontal stripes
    case 6: return std::fmod(std::abs(nx * 3.2 + 4.0), 1.0) < 0.45; // vertical stripes
    case 7: {                                                     // checkerboard
        const int cy = static_cast<int>(std::floor((ny + 1.0) * 2.2));
        const int cx = static_cast<int>(std::floor((nx + 1.0) * 2.2));
        return ((cy + cx) & 1) == 0;
    }
    case 8: return std::abs(ny - nx) < 0.25;                      // diagonal bar
    default: {                                                    // dot grid
        const double dy = std::fmod(std::abs(ny + 2.0), 0.5) - 0.25;
        const double dx = std::fmod(std::abs(nx + 2.0), 0.5) - 0.25;
        return dy * dy + dx * dx < 0.018;
    }
    }
}

} // namespace

LabeledDataset synth_shapes(int count, std::uint64_t seed) {
    LabeledDataset ds;
    ds.shape = {3, 32, 32};
    ds.num_classes = 10;
    ds.pixels.resize(static_cast<std::size_t>(count) * 3072);
    ds.labels.resize(static_cast<std::size_t>(count));
    Rng rng(seed);

    for (int s = 0; s < count; ++s) {
        const int cls = static_cast<int>(rng.below(10));
        ds.labels[static_cast<std::size_t>(s)] = cls;

        // Class 1 ("car") draws its hue from the full wheel so a natural
        // green-dominant subpopulation exists for feature triggers; other
        // classes keep a class-typical hue band.
        double hue;
        if (cls == 1) {
            hue = rng.uniform(0.0, 1.0);
        } else {
            hue = cls * 0.1 + rng.uniform(-0.03, 0.03);
            // keep non-car classes out of the green band
            if (hue > 0.2 && hue < 0.45) hue += 0.3;
        }
        const double sat = rng.uniform(0.65, 0.95);
        const double val = rng.uniform(0.65, 1.0);
        double fg[3];
        hsv_to_rgb(hue, sat, val, fg);
        double bg[3] = {rng.uniform(0.02, 0.22), rng.uniform(0.02, 0.22), rng.uniform(0.02, 0.22)};

        const double cy = rng.uniform(-0.12, 0.12);
        const double cx = rng.uniform(-0.12, 0.12);
        const double scale = rng.uniform(0.8, 1.1);

        float* img = ds.image(static_cast<std::size_t>(s));
        for (int y = 0; y < 32; ++y) {
            for (int x = 0; x < 32; ++x) {
                const double ny = ((y - 15.5) / 13.0 - cy) / scale;
                const double nx = ((x - 15.5) / 13.0 - cx) / scale;
                const bool hit = shape_hit(cls, ny, nx, rng);
                for (int c = 0; c < 3; ++c) {
                    const double base = hit ? fg[c] : bg[c];
                    img[(c * 32 + y) * 32 + x] = clamp01(base + rng.normal() * 0.03);
                }
            }
        }
    }
    return ds;
}

} // namespace sflsim
