#include <string>

#include "config.hpp"
#include "doctest.h"
#include "errors.hpp"

using namespace icp2p;

TEST_CASE("empty text yields the documented defaults") {
    ExperimentConfig cfg = parse_config_text("");
    CHECK(cfg.run.method == Method::Icp2pFl);
    CHECK(cfg.run.train.transmissions == 10);
    CHECK(cfg.run.train.site_rounds == 5);
    CHECK(cfg.run.train.lr == 1e-4);
    CHECK(cfg.run.train.batch == 64);
    CHECK(cfg.run.train.threshold == 1.4759);
    CHECK(cfg.run.train.eps == 1.0);
    CHECK(cfg.run.train.patch == 64);
    CHECK(cfg.run.train.stride == 64);
    CHECK(cfg.run.arch.blocks == 3);
    CHECK(cfg.run.arch.channels == 16);
    CHECK(cfg.transport == TransportKind::InProc);
    CHECK(cfg.seeds == std::vector<uint64_t>{1});
    CHECK(cfg.data.train_count == 200);
    CHECK(cfg.data.test_count == 50);
    CHECK(cfg.data.characteristic_count == 50);
    CHECK(cfg.data.image_size == 64);
    REQUIRE(cfg.protocols.size() == 3);
    CHECK(cfg.protocols[0].id == 1);
    CHECK(cfg.protocols[0].gain == 0.002);
    CHECK(cfg.protocols[0].sigma == 0.010);
    CHECK(cfg.protocols[2].gain == doctest::Approx(0.006));
    CHECK(cfg.protocols[2].sigma == doctest::Approx(0.040));
}

TEST_CASE("minimal config: method plus institution count, defaults filled") {
    ExperimentConfig cfg = parse_config_text("method = fedavg\ninstitutions = 2\n");
    CHECK(cfg.run.method == Method::FedAvg);
    CHECK(cfg.protocols.size() == 2);
    CHECK(cfg.run.train.transmissions == 10);
    CHECK(cfg.run.train.site_rounds == 5);
    CHECK(cfg.run.train.lr == 1e-4);
    CHECK(cfg.run.train.batch == 64);
    CHECK(cfg.run.train.threshold == 1.4759);
}

TEST_CASE("full round of keys, comments, and whitespace") {
    const std::string text = R"(
# experiment
method = cl-mi      # pooled baseline
transport = socket
seeds = 7, 8,9
output.dir = results/run1
institutions = 4
train.lr = 0.25
train.batch = 8
train.eps = 0.5
train.transmissions = 3
train.site_rounds = 2
train.threshold = 0.9
train.patch = 32
train.stride = 16
train.decay_round = 5
train.decay_factor = 0.5
train.fine_tune_incoming = false
model.blocks = 2
model.channels = 12
model.residual = true
odm.switch = off
odm.use_pam = yes
eval.range = 2.0
eval.psnr_cap = 50
si.institution = 2
data.train_count = 16
data.test_count = 4
data.characteristic_count = 4
data.image_size = 32
institution.2.gain = 0.02
institution.2.sigma = 0.05
institution.2.family = 9
)";
    ExperimentConfig cfg = parse_config_text(text);
    CHECK(cfg.run.method == Method::ClMi);
    CHECK(cfg.transport == TransportKind::Socket);
    CHECK(cfg.seeds == std::vector<uint64_t>{7, 8, 9});
    CHECK(cfg.output_dir == "results/run1");
    CHECK(cfg.run.train.lr == 0.25);
    CHECK(cfg.run.train.batch == 8);
    CHECK(cfg.run.train.eps == 0.5);
    CHECK(cfg.run.train.transmissions == 3);
    CHECK(cfg.run.train.site_rounds == 2);
    CHECK(cfg.run.train.threshold == 0.9);
    CHECK(cfg.run.train.patch == 32);
    CHECK(cfg.run.train.stride == 16);
    CHECK(cfg.run.lr_decay_round == 5);
    CHECK(cfg.run.lr_decay_factor == 0.5);
    CHECK(cfg.run.fine_tune_incoming == false);
    CHECK(cfg.run.arch.blocks == 2);
    CHECK(cfg.run.arch.channels == 12);
    CHECK(cfg.run.odm_switch == false);
    CHECK(cfg.run.use_pam == true);
    CHECK(cfg.run.dynamic_range == 2.0);
    CHECK(cfg.run.psnr_cap == 50.0);
    CHECK(cfg.run.si_institution == 2);
    CHECK(cfg.data.train_count == 16);
    CHECK(cfg.data.image_size == 32);
    REQUIRE(cfg.protocols.size() == 4);
    CHECK(cfg.protocols[1].gain == 0.02);
    CHECK(cfg.protocols[1].sigma == 0.05);
    CHECK(cfg.protocols[1].family == 9);
    // untouched institutions keep table defaults
    CHECK(cfg.protocols[0].gain == 0.002);
    CHECK(cfg.protocols[3].gain == doctest::Approx(0.008));
}

TEST_CASE("institution overrides work regardless of key order") {
    ExperimentConfig cfg = parse_config_text("institution.2.gain = 0.5\ninstitutions = 2\n");
    REQUIRE(cfg.protocols.size() == 2);
    CHECK(cfg.protocols[1].gain == 0.5);
}

static int error_line(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.line;
    }
    return -1;
}

TEST_CASE("errors name the key and carry the line number") {
    SUBCASE("negative learning rate") {
        try {
            parse_config_text("method = fedavg\ntrain.lr = -0.5\n");
            FAIL("accepted a negative learning rate");
        } catch (const ConfigError& e) {
            CHECK(e.line == 2);
            CHECK(std::string(e.what()).find("train.lr") != std::string::npos);
        }
    }
    SUBCASE("unknown key") { CHECK(error_line("foo.bar = 1\n") == 1); }
    SUBCASE("missing equals") { CHECK(error_line("just words\n") == 1); }
    SUBCASE("duplicate key") { CHECK(error_line("train.lr = 0.1\ntrain.lr = 0.2\n") == 2); }
    SUBCASE("duplicate institution key") {
        CHECK(error_line("institutions = 2\ninstitution.2.gain = 0.1\ninstitution.2.gain = 0.2\n") == 3);
    }
    SUBCASE("bad number") { CHECK(error_line("train.lr = fast\n") == 1); }
    SUBCASE("bad boolean") { CHECK(error_line("odm.switch = maybe\n") == 1); }
    SUBCASE("institution id out of range") {
        CHECK(error_line("institutions = 2\ninstitution.5.gain = 0.1\n") == 2);
    }
    SUBCASE("unknown institution field") {
        CHECK(error_line("institution.1.dose = 1\n") == 1);
    }
    SUBCASE("duplicate seeds") { CHECK(error_line("seeds = 3, 3\n") == 1); }
    SUBCASE("empty value") { CHECK(error_line("method =\n") == 1); }
    SUBCASE("unknown method") { CHECK(error_line("method = sgd\n") == 1); }
    SUBCASE("patch larger than image") {
        CHECK_THROWS_AS(parse_config_text("data.image_size = 32\n"), ConfigError); // patch 64
    }
    SUBCASE("ring needs two institutions") {
        CHECK_THROWS_AS(parse_config_text("method = icp2pfl\ninstitutions = 1\n"), ConfigError);
    }
    SUBCASE("si institution must exist") {
        CHECK_THROWS_AS(parse_config_text("method = cl-si\nsi.institution = 9\n"), ConfigError);
    }
}

TEST_CASE("identical acquisition parameters are rejected") {
    CHECK_THROWS_AS(parse_config_text("institutions = 2\n"
                                      "institution.1.gain = 0.004\n"
                                      "institution.1.sigma = 0.025\n"),
                    ConfigError);
}

TEST_CASE("canonical dump round-trips bit-exactly") {
    ExperimentConfig cfg = parse_config_text(
        "method = cl-si\nseeds = 5, 17\ntrain.lr = 0.123456789012345\n"
        "institutions = 3\ninstitution.3.sigma = 0.0625\n"
        "data.image_size = 32\ntrain.patch = 32\ntrain.stride = 32\n");
    std::string text = config_to_text(cfg);
    ExperimentConfig back = parse_config_text(text);
    CHECK(config_to_text(back) == text);
    CHECK(back.run.train.lr == cfg.run.train.lr);
    CHECK(back.protocols[2].sigma == 0.0625);
    CHECK(back.seeds == cfg.seeds);
}

TEST_CASE("apply_override mirrors file keys and validates") {
    ExperimentConfig cfg = parse_config_text("");
    apply_override(cfg, "train.batch", "16");
    CHECK(cfg.run.train.batch == 16);
    apply_override(cfg, "method", "fedavg");
    CHECK(cfg.run.method == Method::FedAvg);
    CHECK_THROWS_AS(apply_override(cfg, "train.batch", "zero"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "nope", "1"), ConfigError);
}
