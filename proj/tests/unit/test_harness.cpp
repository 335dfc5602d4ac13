#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "exfilab/harness.hpp"

using namespace exfilab;

namespace {

json strip_timing(json j) {
    if (j.is_object()) {
        j.erase("timing");
        for (auto& [k, v] : j.items()) v = strip_timing(v);
    } else if (j.is_array()) {
        for (auto& v : j) v = strip_timing(v);
    }
    return j;
}

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "exfilab_harness_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// tiny end-to-end configuration: 8x8 images, 4 classes, minutes -> seconds
std::string mini_config(const std::filesystem::path& out, const std::string& attack_kind) {
    return "[data]\n"
           "classes = 4\n"
           "image_size = 8\n"
           "noise_std = 0.2\n"
           "seed = 11\n"
           "train_size = 64\n"
           "test_size = 32\n"
           "[model]\n"
           "widths = 64,24,4\n"
           "[train]\n"
           "epochs = 15\n"
           "lr = 1e-3\n"
           "[attack]\n"
           "kind = " + attack_kind + "\n"
           "num_targets = 8\n"
           "latent_dim = 16\n"
           "epochs = 15\n"
           "[mitigation]\n"
           "method = vanilla_ft\n"
           "epochs = 1\n"
           "[usability]\n"
           "epochs = 20\n"
           "widths = 64,16,4\n"
           "[seeds]\n"
           "seeds = 1\n"
           "[output]\n"
           "dir = " + out.string() + "\n";
}

}  // namespace

TEST_CASE("pipeline: dec attack flows end to end with no manual file surgery") {
    auto out = fresh_dir("dec_flow");
    Config cfg = Config::parse_string(mini_config(out, "dec"));

    json gen = cmd_gen_data(cfg);
    CHECK(std::filesystem::exists(out / "train.mds"));
    CHECK(std::filesystem::exists(out / "test.mds"));

    json train = cmd_train(cfg);
    CHECK(std::filesystem::exists(out / "model_clean_seed1.mwt"));
    CHECK(train["per_seed"][0]["untrained"] == false);

    json attack = cmd_attack(cfg);
    CHECK(std::filesystem::exists(out / "model_attacked_seed1.mwt"));
    CHECK(attack["per_seed"][0]["roundtrip_ber"] == 0.0);
    // low-bit embedding must not shift utility by more than half a point
    double acc_before = attack["per_seed"][0]["utility_before"]["acc"];
    double acc_after = attack["per_seed"][0]["utility"]["acc"];
    CHECK(std::fabs(acc_before - acc_after) <= 0.005 + 1e-12);

    json extract_pre = [&] {
        Config c = cfg;
        c.set("extract", "stage", "attacked");
        return cmd_extract(c);
    }();
    CHECK(extract_pre["per_seed"][0]["leakage"]["ber"] == 0.0);
    CHECK(std::filesystem::exists(out / "recon_seed1.mds"));
    CHECK(std::filesystem::exists(out / "latents_seed1.mwt"));

    json mit = cmd_mitigate(cfg);
    CHECK(std::filesystem::exists(out / "model_mitigated_seed1.mwt"));

    json extract_post = cmd_extract(cfg);  // default stage: mitigated
    CHECK(extract_post["per_seed"][0]["leakage"]["ber"].get<double>() > 0.1);

    json eval = cmd_eval(cfg);
    CHECK(eval["per_seed"][0]["utility"]["acc"].get<double>() > 0.0);

    json usab = cmd_usability(cfg);
    CHECK(usab["aggregate"]["stolen_auc"].is_number());

    Config noise_cfg = cfg;
    noise_cfg.set("usability", "source", "noise");
    json usab_noise = cmd_usability(noise_cfg);
    CHECK(usab_noise["aggregate"]["stolen_auc"].is_number());
}

TEST_CASE("pipeline: transpose attack produces metadata usable by extract and ablate") {
    auto out = fresh_dir("transpose_flow");
    Config cfg = Config::parse_string(mini_config(out, "transpose"));
    cmd_gen_data(cfg);
    json attack = cmd_attack(cfg);
    CHECK(std::filesystem::exists(out / "rev_params_seed1.mwt"));
    CHECK(std::filesystem::exists(out / "attack_meta_seed1.json"));
    CHECK(std::filesystem::exists(out / "targets_seed1.mds"));
    CHECK(attack["per_seed"][0]["leakage"]["ssim_mean"].is_number());

    Config ex_cfg = cfg;
    ex_cfg.set("extract", "stage", "attacked");
    json extract = cmd_extract(ex_cfg);
    // reconstruction from the stored model matches the in-memory attack run
    CHECK(extract["per_seed"][0]["leakage"]["ssim_mean"].get<double>() ==
          Catch::Approx(attack["per_seed"][0]["leakage"]["ssim_mean"].get<double>())
              .margin(1e-3));
    CHECK(!extract["per_seed"][0]["leakage"].contains("ber"));

    Config ab_cfg = cfg;
    ab_cfg.set("ablate", "eta_high_list", "1e-2");
    ab_cfg.set("ablate", "decay_list", "exponential,linear");
    ab_cfg.set("ablate", "epochs", "2");
    json ablate = cmd_ablate(ab_cfg);
    CHECK(ablate["rows"].size() == 4);  // 1 eta x 2 decays x 2 epochs x 1 seed
    CHECK(std::filesystem::exists(out / "ablate_rows.csv"));
}

TEST_CASE("pipeline: reports are reproducible modulo timing") {
    auto out = fresh_dir("determinism");
    Config cfg = Config::parse_string(mini_config(out, "dec"));
    cmd_gen_data(cfg);
    json a = cmd_train(cfg);
    json b = cmd_train(cfg);
    CHECK(strip_timing(a).dump() == strip_timing(b).dump());

    json at1 = cmd_attack(cfg);
    json at2 = cmd_attack(cfg);
    CHECK(strip_timing(at1).dump() == strip_timing(at2).dump());
}

TEST_CASE("pipeline: mitigate with zero epochs writes a byte-identical archive") {
    auto out = fresh_dir("mitigate_identity");
    Config cfg = Config::parse_string(mini_config(out, "dec"));
    cmd_gen_data(cfg);
    cmd_train(cfg);
    cmd_attack(cfg);
    Config m_cfg = cfg;
    m_cfg.set("mitigation", "epochs", "0");
    cmd_mitigate(m_cfg);
    auto attacked = detail::read_file_bytes(out / "model_attacked_seed1.mwt");
    auto mitigated = detail::read_file_bytes(out / "model_mitigated_seed1.mwt");
    CHECK(attacked == mitigated);
}

TEST_CASE("pipeline: train with zero epochs flags the untrained model at chance accuracy") {
    auto out = fresh_dir("untrained");
    Config cfg = Config::parse_string(mini_config(out, "dec"));
    cmd_gen_data(cfg);
    Config t_cfg = cfg;
    t_cfg.set("train", "epochs", "0");
    json report = cmd_train(t_cfg);
    CHECK(report["per_seed"][0]["untrained"] == true);
    double acc = report["per_seed"][0]["utility"]["acc"];
    CHECK(acc <= 0.55);  // 4 classes, chance is 0.25
}

TEST_CASE("pipeline: dec capacity overflow surfaces as a capacity error") {
    auto out = fresh_dir("capacity");
    Config cfg = Config::parse_string(mini_config(out, "dec"));
    cmd_gen_data(cfg);
    cmd_train(cfg);
    Config big = cfg;
    big.set("attack", "num_targets", "64");
    big.set("attack", "latent_dim", "64");  // 64*64 + 2 > 1828 params
    CHECK_THROWS_AS(cmd_attack(big), CapacityError);
}

TEST_CASE("pipeline: extracting from the un-attacked model yields the noise floor") {
    auto out = fresh_dir("garbage_in");
    Config cfg = Config::parse_string(mini_config(out, "dec"));
    cmd_gen_data(cfg);
    cmd_train(cfg);
    cmd_attack(cfg);  // produces the metadata extract needs
    Config clean_cfg = cfg;
    clean_cfg.set("extract", "stage", "clean");
    json report = cmd_extract(clean_cfg);
    double ber = report["per_seed"][0]["leakage"]["ber"];
    double ssim = report["per_seed"][0]["leakage"]["ssim_mean"];
    CHECK(ber >= 0.3);
    CHECK(ber <= 0.7);
    CHECK(ssim <= 0.2);
}

TEST_CASE("pipeline: usability rejects a single-class stolen dataset") {
    auto out = fresh_dir("degenerate_usability");
    Config cfg = Config::parse_string(mini_config(out, "dec"));
    cmd_gen_data(cfg);
    Dataset stolen = noise_dataset(8, 8, 4, std::vector<uint16_t>(8, 2), 5);
    save_dataset(stolen, out / "recon_seed1.mds");
    CHECK_THROWS_AS(cmd_usability(cfg), UndefinedAucError);
}

TEST_CASE("pipeline: config and file errors") {
    auto out = fresh_dir("errors");
    Config cfg = Config::parse_string(mini_config(out, "dec"));
    CHECK_THROWS_AS(cmd_train(cfg), IoError);  // gen-data has not run
    cmd_gen_data(cfg);
    Config bad_stage = cfg;
    bad_stage.set("eval", "stage", "bogus");
    CHECK_THROWS_AS(cmd_eval(bad_stage), ConfigError);
    Config bad_kind = cfg;
    bad_kind.set("attack", "kind", "bogus");
    CHECK_THROWS_AS(cmd_attack(bad_kind), ConfigError);
    Config no_seeds = cfg;
    no_seeds.set("seeds", "seeds", "");
    CHECK_THROWS_AS(cmd_gen_data(no_seeds), ConfigError);
    Config bad_eta = cfg;
    bad_eta.set("ablate", "eta_high_list", "0");
    CHECK_THROWS_AS(cmd_ablate(bad_eta), ConfigError);
}
