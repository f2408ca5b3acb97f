#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "coactive/feedback.hpp"
#include "coactive/io.hpp"
#include "support.hpp"

using namespace coactive;
using namespace testing;

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
    const std::string cmd = std::string(COACTIVE_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST_CASE("command line") {
    const auto dir = temp_dir("cli");
    const auto log = dir / "log.txt";

    SUBCASE("help and usage errors") {
        CHECK(run("--help", log) == 0);
        CHECK(read_file(log).find("gen-dataset") != std::string::npos);
        CHECK(run("run --algo svm", log) == 2);
        CHECK(run("run --feedback psychic", log) == 2);
        CHECK(run("frobnicate", log) == 2);
    }
    SUBCASE("config errors exit 3") {
        CHECK(run("run --algo oracle_svm --setting untrained --T 2 --seeds 1", log) == 3);
        CHECK(run("run --scenario kitchen --T 2 --seeds 1", log) == 3);
    }
    SUBCASE("dataset generation is deterministic") {
        const auto a = dir / "a", b = dir / "b";
        REQUIRE(run("gen-dataset --contexts 2 --per 10 --seed 4 --out " + a.string(), log) == 0);
        REQUIRE(run("gen-dataset --contexts 2 --per 10 --seed 4 --out " + b.string(), log) == 0);
        const std::string labels = read_file(a / "labels.csv");
        CHECK(std::count(labels.begin(), labels.end(), '\n') == 21);
        CHECK(labels == read_file(b / "labels.csv"));
        CHECK(read_file(a / "features.csv") == read_file(b / "features.csv"));
    }
    SUBCASE("run writes metrics and events that replay") {
        const auto out = dir / "m.csv", ev = dir / "events";
        REQUIRE(run("run --T 4 --seeds 1 --candidates 10 --scenario human:both --out " + out.string() + " --events-dir " +
                        ev.string(),
                    log) == 0);
        const std::string text = read_file(out);
        CHECK(text.rfind("# gain=exponential", 0) == 0);
        CHECK(std::count(text.begin(), text.end(), '\n') == 6);
        const auto events = ev / "tpp_human_both_seed1.jsonl";
        REQUIRE(std::filesystem::exists(events));
        CHECK(run("replay --events " + events.string() + " --out " + (dir / "w.json").string(), log) == 0);
        CHECK(read_file(log).find("events=4") != std::string::npos);
        const auto w = weights_from_json(nlohmann::json::parse(read_file(dir / "w.json")));
        CHECK(w == replay_events(events_from_jsonl(read_file(events)), WeightState::zeros(6)));
    }
    SUBCASE("context export round trips") {
        REQUIRE(run("export-context --task grocery_knife --out " + (dir / "k.json").string(), log) == 0);
        CHECK(load_context(read_file(dir / "k.json")) == grocery_knife(scenario_arm()));
    }
    std::filesystem::remove_all(dir);
}
