#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "transcripts.hpp"

using namespace wsi;

namespace {

const std::vector<test::Transcript>& transcripts() {
    static const auto all = test::make_transcripts();
    return all;
}

} // namespace

TEST_CASE("transcripts match the golden files") {
    for (const auto& t : transcripts())
        CHECK(t.text.find("error:") == std::string::npos);
    const auto bad = test::check_transcripts(transcripts(), WSI_GOLDEN_DIR);
    for (const std::string& name : bad)
        MESSAGE("transcript differs: " << name);
    CHECK(bad.empty());
}

TEST_CASE("scan transcript shape") {
    const std::string& scan = transcripts().back().text;
    // Four tiles: two captures each, every command answered before the next.
    std::size_t captures = 0, pos = 0;
    while ((pos = scan.find("> C\n", pos)) != std::string::npos) {
        ++captures;
        ++pos;
    }
    CHECK(captures == 8);
    std::istringstream in(scan);
    std::string line;
    bool awaiting = false;
    while (std::getline(in, line)) {
        if (line.starts_with("> ")) {
            CHECK_FALSE(awaiting);
            awaiting = true;
        } else if (!line.starts_with("< IMG")) {
            awaiting = false;
        }
    }
}
