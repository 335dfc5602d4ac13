#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exfilab/attacks.hpp"
#include "exfilab/config.hpp"
#include "exfilab/data.hpp"
#include "exfilab/metrics.hpp"
#include "exfilab/sanitize.hpp"
#include "exfilab/stego.hpp"
#include "exfilab/train.hpp"
#include "exfilab/weights_io.hpp"

namespace exfilab {

using json = nlohmann::json;

namespace harness {

constexpr int kReportFormatVersion = 1;

inline std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

// ------------------------------------------------------------ configuration

struct Setup {
    std::filesystem::path out;
    SynthSpec synth;
    uint32_t train_size = 512;
    uint32_t test_size = 256;
    std::vector<size_t> widths{256, 128, 64, 8};
    Activation hidden = Activation::relu;
    Activation output = Activation::identity;
    std::vector<uint64_t> seeds{1, 2, 3};
};

inline Setup resolve_setup(const Config& cfg) {
    Setup s;
    s.out = cfg.get_string("output", "dir", "out");
    s.synth.classes = static_cast<uint32_t>(cfg.get_long("data", "classes", 8));
    s.synth.image_size = static_cast<uint32_t>(cfg.get_long("data", "image_size", 16));
    s.synth.noise_std = cfg.get_double("data", "noise_std", 0.1);
    s.synth.seed = cfg.get_u64("data", "seed", 42);
    s.train_size = static_cast<uint32_t>(cfg.get_long("data", "train_size", 512));
    s.test_size = static_cast<uint32_t>(cfg.get_long("data", "test_size", 256));
    s.widths = cfg.get_size_list("model", "widths", {256, 128, 64, 8});
    s.hidden = activation_from_name(cfg.get_string("model", "hidden_activation", "relu"));
    s.output = activation_from_name(cfg.get_string("model", "output_activation", "identity"));
    auto seed_list = cfg.get_long_list("seeds", "seeds", {1, 2, 3});
    if (seed_list.empty()) throw ConfigError("config [seeds] seeds must be non-empty");
    s.seeds.clear();
    for (long v : seed_list) {
        if (v < 0) throw ConfigError("config [seeds] seeds must be >= 0");
        s.seeds.push_back(static_cast<uint64_t>(v));
    }
    return s;
}

inline TransposeConfig resolve_transpose(const Config& cfg, uint64_t seed) {
    TransposeConfig t;
    t.num_targets = static_cast<uint32_t>(cfg.get_long("attack", "num_targets", 32));
    t.lr_cls = cfg.get_double("attack", "lr_cls", 1e-4);
    t.lr_mem = cfg.get_double("attack", "lr_mem", 1e-3);
    t.epochs = cfg.get_long("attack", "epochs", 60);
    t.batch_size = static_cast<size_t>(cfg.get_long("attack", "batch_size", 32));
    t.key_seed = cfg.get_u64("attack", "key_seed", 7);
    t.key_noise_scale = cfg.get_double("attack", "key_noise_scale", 0.1);
    t.mem_decay_factor = cfg.get_double("attack", "mem_sched_factor", 0.5);
    t.mem_decay_every_frac = cfg.get_double("attack", "mem_sched_every_frac", 0.25);
    t.rev_hidden = activation_from_name(cfg.get_string("attack", "rev_hidden_activation", "relu"));
    t.rev_output =
        activation_from_name(cfg.get_string("attack", "rev_output_activation", "identity"));
    t.seed = seed;
    return t;
}

inline MitigationMethod resolve_mitigation(const Config& cfg, uint64_t seed) {
    MitigationMethod m;
    m.kind = mitigation_from_name(cfg.get_string("mitigation", "method", "lwlrd_ft"));
    m.epochs = cfg.get_long("mitigation", "epochs", 3);
    m.batch_size = static_cast<size_t>(cfg.get_long("mitigation", "batch_size", 32));
    m.use_adamw = cfg.get_string("mitigation", "optimizer", "adamw") == "adamw";
    m.eta = cfg.get_double("mitigation", "eta", 1e-4);
    m.eta_high_lr = cfg.get_double("mitigation", "eta_high_lr", 1e-2);
    m.lambda = cfg.get_double("mitigation", "lambda", 1e-2);
    m.eta_high = cfg.get_double("mitigation", "eta_high", 1e-2);
    m.eta_low = cfg.get_double("mitigation", "eta_low", 1e-4);
    m.decay = decay_from_name(cfg.get_string("mitigation", "decay", "exponential"));
    m.sigma = cfg.get_double("mitigation", "sigma", 1e-2);
    m.drop_prob = cfg.get_double("mitigation", "drop_prob", 0.1);
    m.prune_budget = cfg.get_double("mitigation", "prune_budget", 0.04);
    m.superft.kind = ScheduleKind::super_ft;
    m.superft.eta_base = cfg.get_double("mitigation", "superft_eta_base", 1e-4);
    m.superft.eta_max_phase1 = cfg.get_double("mitigation", "superft_eta_max_phase1", 1e-1);
    m.superft.eta_max_phase2 = cfg.get_double("mitigation", "superft_eta_max_phase2", 1e-3);
    m.superft.cycle_len = cfg.get_long("mitigation", "superft_cycle_len", 10);
    m.superft.phase2_start_frac = cfg.get_double("mitigation", "superft_phase2_start_frac", 0.1);
    m.seed = seed;
    return m;
}

// ------------------------------------------------------------------- paths

inline std::filesystem::path seed_file(const std::filesystem::path& out, const std::string& stem,
                                       uint64_t seed, const std::string& ext) {
    return out / (stem + "_seed" + std::to_string(seed) + ext);
}

inline std::filesystem::path model_file(const std::filesystem::path& out, const std::string& stage,
                                        uint64_t seed) {
    if (stage != "clean" && stage != "attacked" && stage != "mitigated")
        throw ConfigError("unknown model stage: " + stage + " (expected clean|attacked|mitigated)");
    return seed_file(out, "model_" + stage, seed, ".mwt");
}

inline void write_report(const json& report, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << report.dump(2) << '\n';
    if (!f) throw IoError("write failure on " + path.string());
}

// --------------------------------------------------------------- utilities

inline json effective_setup_json(const Setup& s) {
    return json{{"output", {{"dir", s.out.string()}}},
                {"data",
                 {{"classes", s.synth.classes},
                  {"image_size", s.synth.image_size},
                  {"noise_std", s.synth.noise_std},
                  {"seed", s.synth.seed},
                  {"train_size", s.train_size},
                  {"test_size", s.test_size}}},
                {"model",
                 {{"widths", s.widths},
                  {"hidden_activation", activation_name(s.hidden)},
                  {"output_activation", activation_name(s.output)}}},
                {"seeds", s.seeds}};
}

inline Network build_model(const Setup& s, uint64_t seed) {
    Rng rng = Rng::substream(seed, 0x4d4f44);  // "MOD"
    Network net = make_mlp(s.widths, s.hidden, s.output, rng);
    return net;
}

inline Network load_model(const Setup& s, const std::filesystem::path& path) {
    Network net = build_model(s, 0);
    load_network_weights(net, read_archive(path));
    return net;
}

inline Dataset load_train(const Setup& s) { return load_dataset(s.out / "train.mds"); }
inline Dataset load_test(const Setup& s) { return load_dataset(s.out / "test.mds"); }

inline json eval_json(const EvalResult& e) {
    return json{{"acc", e.accuracy}, {"macro_auc", e.macro_auc}};
}

struct LeakageDetail {
    LeakageResult result;
    std::vector<double> per_image_ssim;
};

inline LeakageDetail leakage_vs_targets(const Dataset& targets, const Tensor& recon_rows,
                                        double ber = -1.0) {
    require(recon_rows.dims[0] == targets.size(), "leakage: reconstruction count mismatch");
    LeakageDetail d;
    double ssim_sum = 0.0, psnr_sum = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
        Tensor t = targets.image(i);
        Tensor r = Tensor::zeros({targets.height, targets.width});
        std::copy_n(recon_rows.data.begin() + static_cast<long>(i * targets.pixels()),
                    targets.pixels(), r.data.begin());
        double s = ssim(t, r);
        d.per_image_ssim.push_back(s);
        ssim_sum += s;
        psnr_sum += psnr(t, r);
    }
    auto n = static_cast<double>(targets.size());
    d.result.ssim_mean = ssim_sum / n;
    d.result.psnr_mean = psnr_sum / n;
    std::vector<double> sorted = d.per_image_ssim;
    std::sort(sorted.begin(), sorted.end());
    d.result.ssim_median = sorted.size() % 2 == 1
                               ? sorted[sorted.size() / 2]
                               : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    d.result.ber = ber;
    return d;
}

inline json leakage_json(const LeakageResult& r) {
    json j{{"ssim_mean", r.ssim_mean}, {"ssim_median", r.ssim_median}, {"psnr_mean", r.psnr_mean}};
    if (r.ber >= 0.0) j["ber"] = r.ber;
    return j;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace harness

// ------------------------------------------------------------------ gen-data

inline json cmd_gen_data(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    std::filesystem::create_directories(s.out);
    harness::Timer timer;
    Dataset train = synth_generate(s.synth, s.train_size, Split::train);
    Dataset test = synth_generate(s.synth, s.test_size, Split::test);
    uint64_t train_bytes = save_dataset(train, s.out / "train.mds");
    uint64_t test_bytes = save_dataset(test, s.out / "test.mds");

    std::vector<size_t> hist(s.synth.classes, 0);
    for (uint16_t y : train.labels) ++hist[y];
    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "gen-data"},
                {"config", harness::effective_setup_json(s)},
                {"files", {{"train", "train.mds"}, {"test", "test.mds"}}},
                {"train_bytes", train_bytes},
                {"test_bytes", test_bytes},
                {"train_label_histogram", hist},
                {"timing", {{"total_s", timer.seconds()}}}};
    harness::write_report(report, s.out / "gen_data_report.json");
    return report;
}

// --------------------------------------------------------------------- train

inline json cmd_train(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    Dataset train = harness::load_train(s);
    Dataset test = harness::load_test(s);
    TrainConfig tc;
    tc.epochs = cfg.get_long("train", "epochs", 60);
    tc.batch_size = static_cast<size_t>(cfg.get_long("train", "batch_size", 32));
    tc.lr = cfg.get_double("train", "lr", 1e-4);
    tc.weight_decay = cfg.get_double("train", "weight_decay", 0.0);
    tc.use_adamw = cfg.get_string("train", "optimizer", "adamw") == "adamw";

    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "train"},
                {"config", harness::effective_setup_json(s)},
                {"per_seed", json::array()}};
    report["config"]["train"] = {{"epochs", tc.epochs},
                                 {"batch_size", tc.batch_size},
                                 {"lr", tc.lr},
                                 {"weight_decay", tc.weight_decay},
                                 {"optimizer", tc.use_adamw ? "adamw" : "sgd"}};
    std::vector<double> accs, aucs;
    harness::Timer total;
    for (uint64_t seed : s.seeds) {
        harness::Timer timer;
        TrainConfig seeded = tc;
        seeded.seed = seed;
        Network net = harness::build_model(s, seed);
        TrainResult tr = train_classifier(net, train, seeded);
        EvalResult ev = evaluate_classifier(net, test);
        write_archive(net, harness::model_file(s.out, "clean", seed));
        json entry{{"seed", seed},
                   {"utility", harness::eval_json(ev)},
                   {"final_loss", tr.epoch_loss.empty() ? json() : json(tr.epoch_loss.back())},
                   {"untrained", tc.epochs == 0},
                   {"model", harness::model_file(s.out, "clean", seed).filename().string()},
                   {"timing", {{"train_s", timer.seconds()}}}};
        report["per_seed"].push_back(entry);
        accs.push_back(ev.accuracy);
        aucs.push_back(ev.macro_auc);
    }
    report["aggregate"] = {{"acc", harness::mean_of(accs)}, {"macro_auc", harness::mean_of(aucs)}};
    report["timing"] = {{"total_s", total.seconds()}};
    harness::write_report(report, s.out / "train_report.json");
    return report;
}

// -------------------------------------------------------------------- attack

namespace harness {

inline DecCodec resolve_codec(const Config& cfg, const Setup& s, const Dataset& train,
                              uint64_t seed) {
    QuantizerConfig q;
    q.shift = cfg.get_double("attack", "quant_shift", 1.0);
    q.scale = cfg.get_double("attack", "quant_scale", 20000.0);
    auto latent_dim = static_cast<uint32_t>(cfg.get_long("attack", "latent_dim", 64));
    std::string kind = cfg.get_string("attack", "codec", "downsample_affine");
    if (codec_from_name(kind) == CodecKind::downsample_affine)
        return make_downsample_codec(latent_dim, train.height, train.width, q);
    // the autoencoder trains on the attacker's own (external) corpus
    SynthSpec ext = s.synth;
    ext.seed = cfg.get_u64("attack", "external_seed", s.synth.seed + 1000);
    auto ext_count = static_cast<uint32_t>(cfg.get_long("attack", "external_size", 256));
    Dataset external = synth_generate(ext, ext_count, Split::train);
    long epochs = cfg.get_long("attack", "codec_epochs", 300);
    double lr = cfg.get_double("attack", "codec_lr", 3e-3);
    return train_linear_autoencoder(external, latent_dim, q, epochs, lr, seed);
}

inline void save_codec_params(const DecCodec& codec, const std::filesystem::path& path) {
    WeightArchive a;
    const auto P = static_cast<uint32_t>(codec.image_h * codec.image_w);
    ArchiveEntry enc{"encoder", {codec.latent_dim, P}, {}};
    for (double v : codec.encoder) enc.values.push_back(static_cast<float>(v));
    ArchiveEntry dec{"decoder", {P, codec.latent_dim}, {}};
    for (double v : codec.decoder) dec.values.push_back(static_cast<float>(v));
    a.entries.push_back(std::move(enc));
    a.entries.push_back(std::move(dec));
    write_archive(a, path);
}

inline DecCodec codec_from_meta(const json& meta, const std::filesystem::path& out) {
    DecCodec codec;
    codec.kind = codec_from_name(meta.at("codec").get<std::string>());
    codec.latent_dim = meta.at("latent_dim").get<uint32_t>();
    codec.image_h = meta.at("image_h").get<uint32_t>();
    codec.image_w = meta.at("image_w").get<uint32_t>();
    codec.quant.shift = meta.at("quant_shift").get<double>();
    codec.quant.scale = meta.at("quant_scale").get<double>();
    if (codec.kind == CodecKind::downsample_affine) {
        codec.code_h = meta.at("code_h").get<uint32_t>();
        codec.code_w = meta.at("code_w").get<uint32_t>();
    } else {
        WeightArchive a = read_archive(out / meta.at("codec_params").get<std::string>());
        require(a.entries.size() == 2 && a.entries[0].name == "encoder" &&
                    a.entries[1].name == "decoder",
                "codec params archive: unexpected entries");
        codec.encoder.assign(a.entries[0].values.begin(), a.entries[0].values.end());
        codec.decoder.assign(a.entries[1].values.begin(), a.entries[1].values.end());
    }
    return codec;
}

inline json read_meta(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path.string() + " (run the attack command first?)");
    json meta;
    try {
        f >> meta;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return meta;
}

}  // namespace harness

inline json cmd_attack(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    Dataset train = harness::load_train(s);
    Dataset test = harness::load_test(s);
    std::string kind = cfg.get_string("attack", "kind", "transpose");
    if (kind != "transpose" && kind != "dec")
        throw ConfigError("config [attack] kind must be transpose or dec");

    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "attack"},
                {"config", harness::effective_setup_json(s)},
                {"per_seed", json::array()}};
    std::vector<double> accs, ssims, bers;
    harness::Timer total;

    for (uint64_t seed : s.seeds) {
        harness::Timer timer;
        json entry{{"seed", seed}};
        if (kind == "transpose") {
            TransposeConfig tcfg = harness::resolve_transpose(cfg, seed);
            report["config"]["attack"] = {{"kind", "transpose"},
                                          {"num_targets", tcfg.num_targets},
                                          {"lr_cls", tcfg.lr_cls},
                                          {"lr_mem", tcfg.lr_mem},
                                          {"epochs", tcfg.epochs},
                                          {"batch_size", tcfg.batch_size},
                                          {"key_seed", tcfg.key_seed},
                                          {"key_noise_scale", tcfg.key_noise_scale},
                                          {"mem_sched_factor", tcfg.mem_decay_factor},
                                          {"mem_sched_every_frac", tcfg.mem_decay_every_frac}};
            Network init = harness::build_model(s, seed);
            auto [net, rev] = transpose_train(init, train, tcfg);
            double attack_s = timer.seconds();

            write_archive(net, harness::model_file(s.out, "attacked", seed));

            // reverse parameters + targets form the attacker-side metadata
            WeightArchive rev_archive;
            for (size_t k = 0; k < rev.biases.size(); ++k) {
                ArchiveEntry e{"rev_bias" + std::to_string(k + 1),
                               {static_cast<uint32_t>(rev.biases[k].size())},
                               {}};
                for (double v : rev.biases[k]) e.values.push_back(static_cast<float>(v));
                rev_archive.entries.push_back(std::move(e));
            }
            auto rev_path = harness::seed_file(s.out, "rev_params", seed, ".mwt");
            write_archive(rev_archive, rev_path);

            std::vector<size_t> target_idx(tcfg.num_targets);
            for (size_t i = 0; i < target_idx.size(); ++i) target_idx[i] = i;
            Dataset targets;
            targets.height = train.height;
            targets.width = train.width;
            targets.classes = train.classes;
            for (size_t i : target_idx) {
                targets.labels.push_back(train.labels[i]);
                auto begin = train.images.begin() + static_cast<long>(i * train.pixels());
                targets.images.insert(targets.images.end(), begin,
                                      begin + static_cast<long>(train.pixels()));
            }
            auto targets_path = harness::seed_file(s.out, "targets", seed, ".mds");
            save_dataset(targets, targets_path);

            std::vector<std::string> act_names;
            for (Activation a : rev.activations) act_names.push_back(activation_name(a));
            json meta{{"kind", "transpose"},
                      {"num_targets", tcfg.num_targets},
                      {"key_seed", tcfg.key_seed},
                      {"key_noise_scale", tcfg.key_noise_scale},
                      {"classes", train.classes},
                      {"target_indices", target_idx},
                      {"rev_activations", act_names},
                      {"rev_params", rev_path.filename().string()},
                      {"targets", targets_path.filename().string()}};
            auto meta_path = harness::seed_file(s.out, "attack_meta", seed, ".json");
            harness::write_report(meta, meta_path);

            // pre-mitigation sanity: utility + leakage of the fresh attack
            EvalResult ev = evaluate_classifier(net, test);
            Tensor keys =
                transpose_keys(train, target_idx, tcfg.key_seed, tcfg.key_noise_scale);
            Tensor recon = transpose_reconstruct(net, rev, keys);
            harness::LeakageDetail leak = harness::leakage_vs_targets(targets, recon);

            entry["utility"] = harness::eval_json(ev);
            entry["leakage"] = harness::leakage_json(leak.result);
            entry["model"] = harness::model_file(s.out, "attacked", seed).filename().string();
            entry["timing"] = {{"attack_s", attack_s}};
            accs.push_back(ev.accuracy);
            ssims.push_back(leak.result.ssim_mean);
        } else {
            auto n = static_cast<uint32_t>(cfg.get_long("attack", "num_targets", 16));
            require(n <= train.size(), "dec: fewer training images than targets");
            DecCodec codec = harness::resolve_codec(cfg, s, train, seed);
            report["config"]["attack"] = {{"kind", "dec"},
                                          {"num_targets", n},
                                          {"latent_dim", codec.latent_dim},
                                          {"codec", codec_name(codec.kind)},
                                          {"quant_shift", codec.quant.shift},
                                          {"quant_scale", codec.quant.scale}};

            Network net = harness::load_model(s, harness::model_file(s.out, "clean", seed));
            EvalResult before = evaluate_classifier(net, test);

            std::vector<size_t> target_idx(n);
            for (size_t i = 0; i < target_idx.size(); ++i) target_idx[i] = i;
            Dataset targets;
            targets.height = train.height;
            targets.width = train.width;
            targets.classes = train.classes;
            for (size_t i : target_idx) {
                targets.labels.push_back(train.labels[i]);
                auto begin = train.images.begin() + static_cast<long>(i * train.pixels());
                targets.images.insert(targets.images.end(), begin,
                                      begin + static_cast<long>(train.pixels()));
            }
            auto targets_path = harness::seed_file(s.out, "targets", seed, ".mds");
            save_dataset(targets, targets_path);

            uint64_t clamp_count = 0;
            WeightArchive attacked =
                dec_attack_export(net, targets.all_images(), codec, codec.quant, &clamp_count);
            double attack_s = timer.seconds();
            write_archive(attacked, harness::model_file(s.out, "attacked", seed));

            json meta{{"kind", "dec"},
                      {"num_targets", n},
                      {"latent_dim", codec.latent_dim},
                      {"codec", codec_name(codec.kind)},
                      {"image_h", codec.image_h},
                      {"image_w", codec.image_w},
                      {"code_h", codec.code_h},
                      {"code_w", codec.code_w},
                      {"quant_shift", codec.quant.shift},
                      {"quant_scale", codec.quant.scale},
                      {"classes", train.classes},
                      {"targets", targets_path.filename().string()}};
            if (codec.kind == CodecKind::linear_autoencoder) {
                auto codec_path = harness::seed_file(s.out, "codec_params", seed, ".mwt");
                harness::save_codec_params(codec, codec_path);
                meta["codec_params"] = codec_path.filename().string();
            }
            harness::write_report(meta, harness::seed_file(s.out, "attack_meta", seed, ".json"));

            // embedding only rewrites low mantissa bits; utility must not move
            Network embedded = harness::build_model(s, 0);
            load_network_weights(embedded, attacked);
            EvalResult after = evaluate_classifier(embedded, test);

            StegoPayload sent;
            sent.count = static_cast<uint16_t>(n);
            sent.latent_dim = static_cast<uint16_t>(codec.latent_dim);
            for (double v : dec_encode(targets.all_images(), codec).data)
                sent.codes.push_back(quantize(v, codec.quant));
            double ber = bit_error_rate(sent.codes, extract(attacked).codes);

            entry["utility_before"] = harness::eval_json(before);
            entry["utility"] = harness::eval_json(after);
            entry["capacity"] = stego_capacity(attacked.total_params(), codec.latent_dim);
            entry["clamp_count"] = clamp_count;
            entry["roundtrip_ber"] = ber;
            entry["model"] = harness::model_file(s.out, "attacked", seed).filename().string();
            entry["timing"] = {{"attack_s", attack_s}};
            accs.push_back(after.accuracy);
            bers.push_back(ber);
        }
        report["per_seed"].push_back(entry);
    }
    report["aggregate"] = {{"acc", harness::mean_of(accs)}};
    if (!ssims.empty()) report["aggregate"]["ssim_mean"] = harness::mean_of(ssims);
    if (!bers.empty()) report["aggregate"]["roundtrip_ber"] = harness::mean_of(bers);
    report["timing"] = {{"total_s", total.seconds()}};
    harness::write_report(report, s.out / "attack_report.json");
    return report;
}

// ------------------------------------------------------------------ mitigate

inline json cmd_mitigate(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    Dataset train = harness::load_train(s);
    Dataset test = harness::load_test(s);
    std::string stage = cfg.get_string("mitigation", "stage", "attacked");

    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "mitigate"},
                {"config", harness::effective_setup_json(s)},
                {"per_seed", json::array()}};
    std::vector<double> accs, aucs, walls;
    harness::Timer total;
    for (uint64_t seed : s.seeds) {
        MitigationMethod method = harness::resolve_mitigation(cfg, seed);
        report["config"]["mitigation"] = {{"method", mitigation_name(method.kind)},
                                          {"stage", stage},
                                          {"epochs", method.epochs},
                                          {"batch_size", method.batch_size},
                                          {"optimizer", method.use_adamw ? "adamw" : "sgd"},
                                          {"eta", method.eta},
                                          {"eta_high_lr", method.eta_high_lr},
                                          {"lambda", method.lambda},
                                          {"eta_high", method.eta_high},
                                          {"eta_low", method.eta_low},
                                          {"decay", decay_name(method.decay)},
                                          {"sigma", method.sigma},
                                          {"drop_prob", method.drop_prob},
                                          {"prune_budget", method.prune_budget}};
        Network net = harness::load_model(s, harness::model_file(s.out, stage, seed));
        auto [sanitized, mrep] = mitigate(net, method, train);
        write_archive(sanitized, harness::model_file(s.out, "mitigated", seed));
        EvalResult ev = evaluate_classifier(sanitized, test);
        json entry{{"seed", seed},
                   {"method", mrep.method},
                   {"optimizer", mrep.optimizer},
                   {"epochs", mrep.epochs},
                   {"steps", mrep.steps},
                   {"loss_curve", mrep.loss_curve},
                   {"rate_vector", mrep.rate_vector},
                   {"utility", harness::eval_json(ev)},
                   {"model", harness::model_file(s.out, "mitigated", seed).filename().string()},
                   {"timing", {{"mitigation_s", mrep.wall_seconds}}}};
        if (mrep.perturb_zero_fraction > 0.0)
            entry["perturb_zero_fraction"] = mrep.perturb_zero_fraction;
        if (mrep.prune_threshold >= 0.0) entry["prune_threshold"] = mrep.prune_threshold;
        report["per_seed"].push_back(entry);
        accs.push_back(ev.accuracy);
        aucs.push_back(ev.macro_auc);
        walls.push_back(mrep.wall_seconds);
    }
    report["aggregate"] = {{"acc", harness::mean_of(accs)},
                           {"macro_auc", harness::mean_of(aucs)}};
    report["timing"] = {{"total_s", total.seconds()},
                        {"mitigation_s_mean", harness::mean_of(walls)}};
    harness::write_report(report, s.out / "mitigate_report.json");
    return report;
}

// ------------------------------------------------------------------- extract

inline json cmd_extract(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    std::string stage = cfg.get_string("extract", "stage", "mitigated");

    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "extract"},
                {"config", harness::effective_setup_json(s)},
                {"per_seed", json::array()}};
    report["config"]["extract"] = {{"stage", stage}};
    std::vector<double> ssims, psnrs, bers;
    harness::Timer total;
    for (uint64_t seed : s.seeds) {
        harness::Timer timer;
        json meta = harness::read_meta(harness::seed_file(s.out, "attack_meta", seed, ".json"));
        Dataset targets = load_dataset(s.out / meta.at("targets").get<std::string>());
        json entry{{"seed", seed}};
        Tensor recon;
        double ber = -1.0;
        if (meta.at("kind") == "transpose") {
            Network net = harness::load_model(s, harness::model_file(s.out, stage, seed));
            WeightArchive rev_archive =
                read_archive(s.out / meta.at("rev_params").get<std::string>());
            ReverseParams rev;
            for (const auto& e : rev_archive.entries) {
                rev.biases.emplace_back(e.values.begin(), e.values.end());
            }
            for (const auto& a : meta.at("rev_activations"))
                rev.activations.push_back(activation_from_name(a.get<std::string>()));
            std::vector<size_t> target_idx = meta.at("target_indices").get<std::vector<size_t>>();
            Tensor keys = Tensor::zeros({target_idx.size(), static_cast<size_t>(targets.classes)});
            for (size_t r = 0; r < target_idx.size(); ++r) {
                Tensor k = key_vector(target_idx[r], targets.labels[r], targets.classes,
                                      meta.at("key_seed").get<uint64_t>(),
                                      meta.at("key_noise_scale").get<double>());
                std::copy(k.data.begin(), k.data.end(),
                          keys.data.begin() + static_cast<long>(r * targets.classes));
            }
            recon = transpose_reconstruct(net, rev, keys);
        } else {
            WeightArchive archive = read_archive(harness::model_file(s.out, stage, seed));
            DecCodec codec = harness::codec_from_meta(meta, s.out);
            auto n = meta.at("num_targets").get<uint16_t>();
            auto d = meta.at("latent_dim").get<uint16_t>();
            StegoPayload payload;
            bool header_corrupt = false;
            try {
                payload = extract(archive);
                if (payload.count != n || payload.latent_dim != d) {
                    header_corrupt = true;
                    payload = extract_fixed(archive, n, d);
                }
            } catch (const PayloadError&) {
                header_corrupt = true;
                payload = extract_fixed(archive, n, d);
            }
            entry["payload_header_corrupt"] = header_corrupt;

            StegoPayload sent;
            sent.count = n;
            sent.latent_dim = d;
            for (double v : dec_encode(targets.all_images(), codec).data)
                sent.codes.push_back(quantize(v, codec.quant));
            ber = bit_error_rate(sent.codes, payload.codes);

            Tensor latents = Tensor::zeros({static_cast<size_t>(n), static_cast<size_t>(d)});
            for (size_t i = 0; i < payload.codes.size(); ++i)
                latents.data[i] = dequantize(payload.codes[i], codec.quant);
            WeightArchive latent_archive;
            ArchiveEntry le{"latents", {n, d}, {}};
            for (double v : latents.data) le.values.push_back(static_cast<float>(v));
            latent_archive.entries.push_back(std::move(le));
            write_archive(latent_archive, harness::seed_file(s.out, "latents", seed, ".mwt"));
            recon = dec_decode(latents, codec);
        }

        Dataset recon_ds;
        recon_ds.height = targets.height;
        recon_ds.width = targets.width;
        recon_ds.classes = targets.classes;
        recon_ds.labels = targets.labels;
        recon_ds.images = recon.data;
        auto recon_path = harness::seed_file(s.out, "recon", seed, ".mds");
        save_dataset(recon_ds, recon_path);

        harness::LeakageDetail leak = harness::leakage_vs_targets(targets, recon, ber);
        entry["leakage"] = harness::leakage_json(leak.result);
        entry["per_image_ssim"] = leak.per_image_ssim;
        entry["recon"] = recon_path.filename().string();
        entry["timing"] = {{"extract_s", timer.seconds()}};
        report["per_seed"].push_back(entry);
        ssims.push_back(leak.result.ssim_mean);
        psnrs.push_back(leak.result.psnr_mean);
        if (ber >= 0.0) bers.push_back(ber);
    }
    report["aggregate"] = {{"ssim_mean", harness::mean_of(ssims)},
                           {"psnr_mean", harness::mean_of(psnrs)}};
    if (!bers.empty()) report["aggregate"]["ber"] = harness::mean_of(bers);
    report["timing"] = {{"total_s", total.seconds()}};
    harness::write_report(report, s.out / "extract_report.json");
    return report;
}

// ---------------------------------------------------------------------- eval

inline json cmd_eval(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    Dataset test = harness::load_test(s);
    std::string stage = cfg.get_string("eval", "stage", "clean");
    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "eval"},
                {"config", harness::effective_setup_json(s)},
                {"per_seed", json::array()}};
    report["config"]["eval"] = {{"stage", stage}};
    std::vector<double> accs, aucs;
    harness::Timer total;
    for (uint64_t seed : s.seeds) {
        Network net = harness::load_model(s, harness::model_file(s.out, stage, seed));
        EvalResult ev = evaluate_classifier(net, test);
        report["per_seed"].push_back(json{{"seed", seed}, {"utility", harness::eval_json(ev)}});
        accs.push_back(ev.accuracy);
        aucs.push_back(ev.macro_auc);
    }
    report["aggregate"] = {{"acc", harness::mean_of(accs)}, {"macro_auc", harness::mean_of(aucs)}};
    report["timing"] = {{"total_s", total.seconds()}};
    harness::write_report(report, s.out / "eval_report.json");
    return report;
}

// ----------------------------------------------------------------- usability

inline json cmd_usability(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    Dataset test = harness::load_test(s);
    std::string source = cfg.get_string("usability", "source", "extracted");
    if (source != "extracted" && source != "noise")
        throw ConfigError("config [usability] source must be extracted or noise");

    TrainConfig uc;
    uc.epochs = cfg.get_long("usability", "epochs", 150);
    uc.batch_size = static_cast<size_t>(cfg.get_long("usability", "batch_size", 16));
    uc.lr = cfg.get_double("usability", "lr", 1e-3);
    std::vector<size_t> widths = cfg.get_size_list(
        "usability", "widths", {test.pixels(), 64, static_cast<size_t>(test.classes)});

    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "usability"},
                {"config", harness::effective_setup_json(s)},
                {"per_seed", json::array()}};
    report["config"]["usability"] = {{"source", source},
                                     {"epochs", uc.epochs},
                                     {"batch_size", uc.batch_size},
                                     {"lr", uc.lr},
                                     {"widths", widths}};
    std::vector<double> aucs;
    harness::Timer total;
    for (uint64_t seed : s.seeds) {
        harness::Timer timer;
        Dataset stolen;
        if (source == "extracted") {
            stolen = load_dataset(harness::seed_file(s.out, "recon", seed, ".mds"));
        } else {
            Dataset targets =
                load_dataset(harness::seed_file(s.out, "targets", seed, ".mds"));
            stolen = noise_dataset(targets.height, targets.width, targets.classes,
                                   targets.labels, seed);
        }
        bool degenerate = true;
        for (uint16_t y : stolen.labels)
            if (y != stolen.labels.front()) degenerate = false;
        if (degenerate)
            throw UndefinedAucError("usability: stolen dataset has a single class, AUC undefined");

        TrainConfig seeded = uc;
        seeded.seed = seed;
        Rng rng = Rng::substream(seed, 0x555342);  // "USB"
        Network fresh = make_mlp(widths, Activation::relu, Activation::identity, rng);
        train_classifier(fresh, stolen, seeded);
        EvalResult ev = evaluate_classifier(fresh, test);
        report["per_seed"].push_back(json{{"seed", seed},
                                          {"stolen_auc", ev.macro_auc},
                                          {"stolen_acc", ev.accuracy},
                                          {"timing", {{"usability_s", timer.seconds()}}}});
        aucs.push_back(ev.macro_auc);
    }
    report["aggregate"] = {{"stolen_auc", harness::mean_of(aucs)}};
    report["timing"] = {{"total_s", total.seconds()}};
    harness::write_report(report, s.out / "usability_report.json");
    return report;
}

// -------------------------------------------------------------------- ablate

inline json cmd_ablate(const Config& cfg) {
    harness::Setup s = harness::resolve_setup(cfg);
    Dataset train = harness::load_train(s);
    Dataset test = harness::load_test(s);

    std::vector<double> eta_highs = cfg.get_double_list("ablate", "eta_high_list", {1e-1, 1e-2, 1e-3});
    std::vector<std::string> decays = cfg.get_list("ablate", "decay_list", {"exponential", "linear"});
    long epochs = cfg.get_long("ablate", "epochs", 8);
    if (eta_highs.empty() || decays.empty() || epochs < 1)
        throw ArgumentError("ablate: sweep axes must be non-empty and epochs >= 1");
    for (double eh : eta_highs)
        if (eh <= 0.0) throw ConfigError("ablate: eta_high values must be > 0");
    for (const auto& d : decays) decay_from_name(d);  // validates

    json report{{"format_version", harness::kReportFormatVersion},
                {"command", "ablate"},
                {"config", harness::effective_setup_json(s)},
                {"rows", json::array()}};
    report["config"]["ablate"] = {{"eta_high_list", eta_highs},
                                  {"decay_list", decays},
                                  {"epochs", epochs}};

    struct Row {
        double eta_high;
        std::string decay;
        long epoch;
        uint64_t seed;
        double acc, auc, ssim;
    };
    std::vector<Row> rows;
    harness::Timer total;

    for (uint64_t seed : s.seeds) {
        json meta = harness::read_meta(harness::seed_file(s.out, "attack_meta", seed, ".json"));
        if (meta.at("kind") != "transpose")
            throw ArgumentError("ablate: requires a transpose attack run (leakage is SSIM-based)");
        Dataset targets = load_dataset(s.out / meta.at("targets").get<std::string>());
        Network attacked = harness::load_model(s, harness::model_file(s.out, "attacked", seed));
        WeightArchive rev_archive = read_archive(s.out / meta.at("rev_params").get<std::string>());
        ReverseParams rev;
        for (const auto& e : rev_archive.entries)
            rev.biases.emplace_back(e.values.begin(), e.values.end());
        for (const auto& a : meta.at("rev_activations"))
            rev.activations.push_back(activation_from_name(a.get<std::string>()));
        std::vector<size_t> target_idx = meta.at("target_indices").get<std::vector<size_t>>();
        Tensor keys = Tensor::zeros({target_idx.size(), static_cast<size_t>(targets.classes)});
        for (size_t r = 0; r < target_idx.size(); ++r) {
            Tensor k = key_vector(target_idx[r], targets.labels[r], targets.classes,
                                  meta.at("key_seed").get<uint64_t>(),
                                  meta.at("key_noise_scale").get<double>());
            std::copy(k.data.begin(), k.data.end(),
                      keys.data.begin() + static_cast<long>(r * targets.classes));
        }

        for (double eta_high : eta_highs) {
            for (const auto& decay : decays) {
                MitigationMethod method = harness::resolve_mitigation(cfg, seed);
                method.kind = MitigationKind::lwlrd_ft;
                method.epochs = epochs;
                method.eta_high = eta_high;
                method.decay = decay_from_name(decay);
                auto hook = [&](long epoch, const Network& net) {
                    EvalResult ev = evaluate_classifier(net, test);
                    Tensor recon = transpose_reconstruct(net, rev, keys);
                    harness::LeakageDetail leak = harness::leakage_vs_targets(targets, recon);
                    rows.push_back(Row{eta_high, decay, epoch, seed, ev.accuracy, ev.macro_auc,
                                       leak.result.ssim_mean});
                };
                mitigate(attacked, method, train, hook);
            }
        }
    }

    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.eta_high, a.decay, a.epoch, a.seed) <
               std::tie(b.eta_high, b.decay, b.epoch, b.seed);
    });

    std::ofstream csv(s.out / "ablate_rows.csv");
    if (!csv) throw IoError("cannot open ablate_rows.csv for writing");
    csv << "eta_high,decay,epoch,seed,acc,auc,ssim\n";
    for (const Row& r : rows) {
        csv << harness::fmt_g(r.eta_high) << ',' << r.decay << ',' << r.epoch << ',' << r.seed
            << ',' << harness::fmt_g(r.acc) << ',' << harness::fmt_g(r.auc) << ','
            << harness::fmt_g(r.ssim) << '\n';
        report["rows"].push_back(json{{"eta_high", r.eta_high},
                                      {"decay", r.decay},
                                      {"epoch", r.epoch},
                                      {"seed", r.seed},
                                      {"acc", r.acc},
                                      {"auc", r.auc},
                                      {"ssim", r.ssim}});
    }
    report["timing"] = {{"total_s", total.seconds()}};
    harness::write_report(report, s.out / "ablate_report.json");
    return report;
}

}  // namespace exfilab
