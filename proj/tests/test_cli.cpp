#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "corrprune/checkpoint.hpp"
#include "corrprune/config.hpp"
#include "corrprune/training.hpp"
#include "test_support.hpp"

using namespace corrprune;
using namespace testsupport;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

RunConfig small_config() {
    RunConfig cfg;
    cfg.d = 16;
    cfg.L = 2;
    cfg.H = 4;
    cfg.po = 1;
    cfg.I = 2;
    cfg.n = 64;
    cfg.pairs = 4;
    cfg.batch = 2;
    cfg.iterations = 3;
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST_CASE("config parsing and defaults", "[cli]") {
    SECTION("empty text keeps every default") {
        const RunConfig cfg = parse_config_text("");
        CHECK(cfg.d == 128);
        CHECK(cfg.L == 5);
        CHECK(cfg.H == 4);
        CHECK(cfg.po == 2);
        CHECK(cfg.prune_rate == 0.5);
        CHECK(cfg.I == 2);
        CHECK(cfg.beta == 0.5);
        CHECK(cfg.lr == 1e-3);
        CHECK(cfg.batch == 32);
    }

    SECTION("flags override file values") {
        const std::string path = temp_path("corrprune_cfg.txt");
        std::ofstream(path) << "d = 64\nL = 3\n";
        const RunConfig cfg = parse_config(path, {{"d", "32"}});
        CHECK(cfg.d == 32);
        CHECK(cfg.L == 3);
        std::filesystem::remove(path);
    }

    SECTION("unknown keys fail with a line number") {
        try {
            parse_config_text("d = 64\nwat = 9\n", "test.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("test.cfg:2") != std::string::npos);
            CHECK(std::string(e.what()).find("wat") != std::string::npos);
        }
    }

    SECTION("bad values carry line numbers too") {
        try {
            parse_config_text("\n\nd = soup\n", "test.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("test.cfg:3") != std::string::npos);
        }
    }

    SECTION("invariant violations are config errors") {
        const RunConfig cfg = parse_config_text("d = 30\nH = 4\n");
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    SECTION("echo round-trips to an identical config") {
        RunConfig cfg = small_config();
        cfg.noise = 0.0012345678901234567;
        cfg.block_variant = "vanilla";
        const RunConfig back = parse_config_text(config_to_text(cfg));
        CHECK(config_to_text(back) == config_to_text(cfg));
        CHECK(back.noise == cfg.noise);
        CHECK(back.block_variant == cfg.block_variant);
    }
}

TEST_CASE("checkpoint roundtrip and guards", "[cli]") {
    const RunConfig cfg = small_config();
    Checkpoint ckpt = init_checkpoint(cfg);
    ckpt.iteration = 7;
    ckpt.opt.step = 7;

    SECTION("save -> load -> save is bytewise idempotent") {
        const std::string a = serialize_checkpoint(ckpt);
        const Checkpoint loaded = parse_checkpoint(a);
        const std::string b = serialize_checkpoint(loaded);
        CHECK(a == b);
        CHECK(loaded.iteration == 7);
        CHECK(loaded.opt.step == 7);
        CHECK(loaded.config.d == cfg.d);
    }

    SECTION("file roundtrip") {
        const std::string path = temp_path("corrprune_ckpt.bin");
        save_checkpoint(path, ckpt);
        const Checkpoint loaded = load_checkpoint(path);
        CHECK(serialize_checkpoint(loaded) == serialize_checkpoint(ckpt));
        std::filesystem::remove(path);
    }

    SECTION("mismatched architecture names the offending tensor") {
        const std::string buf = serialize_checkpoint(ckpt);
        RunConfig other = cfg;
        other.d = 32;
        try {
            parse_checkpoint(buf, &other);
            FAIL("expected ShapeMismatchError");
        } catch (const ShapeMismatchError& e) {
            CHECK(std::string(e.what()).find("m1.") != std::string::npos);
        }
    }

    SECTION("bad magic and version are distinguished") {
        std::string buf = serialize_checkpoint(ckpt);
        std::string bad = buf;
        bad[0] = 'Z';
        CHECK_THROWS_AS(parse_checkpoint(bad), BadMagicError);
        std::string ver = buf;
        ver[7] = '2';
        CHECK_THROWS_AS(parse_checkpoint(ver), VersionMismatchError);
    }

    SECTION("truncation is rejected with no partial state") {
        std::string buf = serialize_checkpoint(ckpt);
        buf.resize(buf.size() / 2);
        CHECK_THROWS_AS(parse_checkpoint(buf), TruncationError);
    }
}

TEST_CASE("fixed-seed training is bitwise reproducible", "[cli]") {
    RunConfig cfg = small_config();
    cfg.iterations = 6;
    DatasetSpec spec = cfg.dataset();
    const Dataset data = generate_dataset(spec);

    auto run = [&]() {
        Checkpoint ckpt = init_checkpoint(cfg);
        const TrainResult r = train(data, ckpt.params, ckpt.stats, ckpt.opt, cfg.network(),
                                    cfg.loss(), cfg.schedule(), cfg.train_options());
        ckpt.iteration = r.iterations_completed;
        return serialize_checkpoint(ckpt);
    };
    const std::string a = run();
    const std::string b = run();
    CHECK(a == b);
}
