#include "sflsim/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sflsim/errors.hpp"
#include "sflsim/nn.hpp"
#include "sflsim/rng.hpp"

namespace sflsim {

ModelSpec discriminator_spec(const ModelSpec& classifier) {
    if (classifier.layers.empty() || classifier.layers.back().kind != LayerKind::Dense)
        throw error("classifier must end in a dense class head");
    ModelSpec d;
    d.input = classifier.input;
    d.layers.assign(classifier.layers.begin(), classifier.layers.end() - 1);
    LayerSpec head;
    head.kind = LayerKind::Dense;
    head.in = d.layers.empty() ? d.input : d.layers.back().out;
    head.out = {1, 1, 1};
    d.layers.push_back(head);
    d.num_classes = 0;
    d.validate();
    return d;
}

ModelState init_discriminator_from_global(const ParamVector& w_g, const ModelSpec& classifier,
                                          std::uint64_t head_seed) {
    if (w_g.size() != static_cast<std::size_t>(classifier.param_count()))
        throw shape_error("global model length does not match classifier spec");
    const ModelSpec dspec = discriminator_spec(classifier);
    ModelState d = make_model(dspec, head_seed);
    // Shared feature extractor: everything before the head, bit-exact.
    const auto shared = static_cast<std::size_t>(dspec.param_offset(dspec.layers.size() - 1));
    std::copy(w_g.begin(), w_g.begin() + static_cast<std::ptrdiff_t>(shared), d.params.begin());
    d.reset_optimizer(OptKind::Adam);
    return d;
}

namespace {

Batch noise_batch(int n, int noise_dim, Rng& rng) {
    Batch b;
    b.n = n;
    b.shape = {noise_dim, 1, 1};
    b.x.resize(static_cast<std::size_t>(n) * noise_dim);
    for (auto& v : b.x) v = rng.normal();
    return b;
}

Batch images_as_batch(const LabeledDataset& ds, const std::vector<int>& order, std::size_t begin,
                      std::size_t end) {
    Batch b;
    fill_batch(ds, order, begin, end, b);
    b.y.clear();
    return b;
}

} // namespace

GanLosses train_gan(GanState& gan, const LabeledDataset& attacker_data, int epochs,
                    const GanTrainOpts& opts) {
    if (attacker_data.empty()) throw error("train_gan: no training data");
    if (epochs < 0) throw error("train_gan: negative epoch count");
    GanLosses last;
    if (epochs == 0) return last;

    const ModelSpec& gspec = gan.generator.spec;
    const ModelSpec& dspec = gan.discriminator.spec;
    if (!(gspec.output() == dspec.input))
        throw shape_error("generator output does not match discriminator input");

    Rng rng(opts.seed);
    std::vector<int> order(attacker_data.size());
    std::iota(order.begin(), order.end(), 0);

    Workspace d_ws, g_ws;
    ParamVector d_grad(gan.discriminator.params.size());
    ParamVector g_grad(gan.generator.params.size());

    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        double d_sum = 0.0, g_sum = 0.0;
        int batches = 0;
        for (std::size_t at = 0; at < attacker_data.size();
             at += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t end =
                std::min(attacker_data.size(), at + static_cast<std::size_t>(opts.batch_size));
            const int n = static_cast<int>(end - at);

            // --- discriminator step: real up, fake down
            Batch real = images_as_batch(attacker_data, order, at, end);
            Batch z = noise_batch(n, gan.noise_dim, rng);
            const std::vector<double> fake = forward(gspec, gan.generator.params, z);
            Batch fake_batch;
            fake_batch.n = n;
            fake_batch.shape = gspec.output();
            fake_batch.x = fake;

            std::fill(d_grad.begin(), d_grad.end(), 0.0);
            std::vector<double> dscores;
            const auto& real_scores =
                forward_pass(dspec, gan.discriminator.params, real, d_ws);
            const double d_real =
                bce_with_logits(real_scores, std::vector<double>(real_scores.size(), 1.0), &dscores);
            backward_pass(dspec, gan.discriminator.params, real, d_ws, dscores, d_grad);

            const auto& fake_scores =
                forward_pass(dspec, gan.discriminator.params, fake_batch, d_ws);
            const double d_fake =
                bce_with_logits(fake_scores, std::vector<double>(fake_scores.size(), 0.0), &dscores);
            backward_pass(dspec, gan.discriminator.params, fake_batch, d_ws, dscores, d_grad);

            const double d_loss = d_real + d_fake;
            if (!std::isfinite(d_loss))
                throw numeric_error("GAN diverged: non-finite discriminator loss at epoch " +
                                    std::to_string(e));
            adam_step(gan.discriminator, d_grad, opts.lr, opts.beta1, opts.beta2);

            // --- generator step: non-saturating loss, fresh noise
            Batch z2 = noise_batch(n, gan.noise_dim, rng);
            Batch gen_batch;
            gen_batch.n = n;
            gen_batch.shape = gspec.output();
            gen_batch.x = forward_pass(gspec, gan.generator.params, z2, g_ws);

            const auto& gen_scores =
                forward_pass(dspec, gan.discriminator.params, gen_batch, d_ws);
            const double g_loss =
                bce_with_logits(gen_scores, std::vector<double>(gen_scores.size(), 1.0), &dscores);
            if (!std::isfinite(g_loss))
                throw numeric_error("GAN diverged: non-finite generator loss at epoch " +
                                    std::to_string(e));
            ParamVector d_unused(gan.discriminator.params.size(), 0.0);
            std::vector<double> dimages;
            backward_pass(dspec, gan.discriminator.params, gen_batch, d_ws, dscores, d_unused,
                          &dimages);
            std::fill(g_grad.begin(), g_grad.end(), 0.0);
            backward_pass(gspec, gan.generator.params, z2, g_ws, dimages, g_grad);
            adam_step(gan.generator, g_grad, opts.lr, opts.beta1, opts.beta2);

            d_sum += d_loss;
            g_sum += g_loss;
            ++batches;
        }
        last.d_loss = d_sum / std::max(1, batches);
        last.g_loss = g_sum / std::max(1, batches);
    }
    return last;
}

LabeledDataset generate_images(const GanState& gan, int count, std::uint64_t seed) {
    LabeledDataset out;
    out.shape = gan.generator.spec.output();
    out.num_classes = 0;
    if (count <= 0) return out;
    Rng rng(seed);
    constexpr int kChunk = 64;
    for (int done = 0; done < count; done += kChunk) {
        const int n = std::min(kChunk, count - done);
        Batch z = noise_batch(n, gan.noise_dim, rng);
        const auto imgs = forward(gan.generator.spec, gan.generator.params, z);
        const int pc = out.shape.count();
        for (int s = 0; s < n; ++s) {
            std::vector<float> img(static_cast<std::size_t>(pc));
            for (int i = 0; i < pc; ++i) {
                const double v = imgs[static_cast<std::size_t>(s) * pc + i];
                img[static_cast<std::size_t>(i)] =
                    static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
            out.pixels.insert(out.pixels.end(), img.begin(), img.end());
            out.labels.push_back(0);
        }
    }
    return out;
}

SupplementResult generate_supplement(const Supplementer& supp, int count_per_class,
                                     std::uint64_t seed) {
    SupplementResult res;
    res.achieved.assign(supp.target_classes.size(), 0);
    if (count_per_class <= 0 || supp.target_classes.empty()) return res;

    if (supp.mode == SupplementMode::Oracle) {
        if (!supp.holdout) throw error("oracle supplementer needs a held-out dataset");
        res.d_f.shape = supp.holdout->shape;
        res.d_f.num_classes = supp.holdout->num_classes;
        Rng rng(seed);
        for (std::size_t t = 0; t < supp.target_classes.size(); ++t) {
            const int cls = supp.target_classes[t];
            std::vector<int> pool;
            for (std::size_t i = 0; i < supp.holdout->size(); ++i)
                if (supp.holdout->labels[i] == cls) pool.push_back(static_cast<int>(i));
            const int take = std::min<int>(count_per_class, static_cast<int>(pool.size()));
            const auto picks =
                rng.sample_without_replacement(static_cast<int>(pool.size()), take);
            for (int p : picks)
                res.d_f.push_back(supp.holdout->image(static_cast<std::size_t>(
                                      pool[static_cast<std::size_t>(p)])),
                                  cls);
            res.achieved[t] = take;
            if (take < count_per_class) res.shortfall = true;
        }
        return res;
    }

    // GAN mode: generate, label with the classifier argmax, keep confident
    // samples in the target set.
    if (!supp.gan || !supp.classifier_spec || !supp.classifier_params)
        throw error("gan supplementer needs generator state and the classifier");
    res.d_f.shape = supp.gan->generator.spec.output();
    res.d_f.num_classes = supp.classifier_spec->num_classes;

    std::vector<int> want(supp.target_classes.size(), count_per_class);
    const int total_want = count_per_class * static_cast<int>(supp.target_classes.size());
    const int max_draws = 40 * total_want;
    int drawn = 0, kept = 0;
    Rng seeds(seed);
    while (kept < total_want && drawn < max_draws) {
        const int n = std::min(128, max_draws - drawn);
        LabeledDataset gen = generate_images(*supp.gan, n, seeds.next_u64());
        drawn += n;
        Batch b = make_batch(gen, 0, gen.size());
        b.y.clear();
        const auto logits = forward(*supp.classifier_spec, *supp.classifier_params, b);
        const int k = supp.classifier_spec->output().count();
        for (int s = 0; s < n; ++s) {
            const double* row = logits.data() + static_cast<std::size_t>(s) * k;
            int arg = 0;
            for (int j = 1; j < k; ++j)
                if (row[j] > row[arg]) arg = j;
            // softmax confidence of the argmax
            double m = row[arg], denom = 0.0;
            for (int j = 0; j < k; ++j) denom += std::exp(row[j] - m);
            const double conf = 1.0 / denom;
            if (conf < supp.confidence_floor) continue;
            const auto it =
                std::find(supp.target_classes.begin(), supp.target_classes.end(), arg);
            if (it == supp.target_classes.end()) continue;
            const auto t = static_cast<std::size_t>(it - supp.target_classes.begin());
            if (res.achieved[t] >= count_per_class) continue;
            res.d_f.push_back(gen.image(static_cast<std::size_t>(s)), arg);
            ++res.achieved[t];
            ++kept;
        }
    }
    res.shortfall = kept < total_want;
    return res;
}

void write_sample_grid(const LabeledDataset& ds, int rows, int cols, const std::string& path) {
    if (ds.empty() || rows < 1 || cols < 1) throw error("write_sample_grid: nothing to draw");
    const int h = ds.shape.h, w = ds.shape.w;
    const int H = rows * h, W = cols * w;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw format_error("cannot write " + path);
    f << "P6\n" << W << " " << H << "\n255\n";
    std::vector<unsigned char> canvas(static_cast<std::size_t>(H) * W * 3, 0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const std::size_t s = static_cast<std::size_t>(r) * cols + c;
            if (s >= ds.size()) break;
            const float* img = ds.image(s);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int ch = 0; ch < 3; ++ch) {
                        const int src_ch = ds.shape.c == 3 ? ch : 0;
                        const float v = img[(src_ch * h + y) * w + x];
                        canvas[((static_cast<std::size_t>(r * h + y) * W) + c * w + x) * 3 +
                               static_cast<std::size_t>(ch)] =
                            static_cast<unsigned char>(std::lround(v * 255.0f));
                    }
        }
    }
    f.write(reinterpret_cast<const char*>(canvas.data()),
            static_cast<std::streamsize>(canvas.size()));
}

} // namespace sflsim
