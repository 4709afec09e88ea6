#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "h3gnn/data.hpp"
#include "test_support.hpp"

using namespace h3gnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("h3gnn_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

// a 6-node toy dataset in the converted layout
void write_toy(const fs::path& dir) {
    write_file(dir / "nodes.txt",
               "0\t1,0,0,1\t0\n"
               "1\t0,1,0,0\t0\n"
               "2\t0,0,1,0\t1\n"
               "3\t1,1,0,0\t1\n"
               "4\t0,0,0,1\t2\n"
               "5\t1,0,1,0\t2\n");
    write_file(dir / "edges.txt", "0 1\n1 0\n1 2\n2 3\n3 4\n4 5\n5 5\n");
    write_file(dir / "splits.txt",
               "0 train 0 1\n0 val 2 3\n0 test 4 5\n"
               "1 train 2 3\n1 val 4 5\n1 test 0 1\n");
}

}  // namespace

TEST_CASE("webkb-format loader parses the converted layout") {
    TempDir tmp;
    write_toy(tmp.path);
    auto ds = load_webkb(tmp.str());
    CHECK(ds.stats.nodes == 6);
    CHECK(ds.stats.raw_edge_lines == 7);
    CHECK(ds.stats.undirected_edges == 5);  // 0-1 duplicated, 5-5 dropped
    CHECK(ds.stats.self_loops_dropped == 1);
    CHECK(ds.stats.feature_dim == 4);
    CHECK(ds.stats.classes == 3);
    CHECK(ds.stats.splits == 2);
    CHECK(ds.graph.features().at(0, 3) == 1.0);
    CHECK(ds.graph.features().at(1, 0) == 0.0);
    CHECK(ds.graph.labels()[4] == 2);
    CHECK(ds.graph.splits()[1].train[2] == 1);
    CHECK(ds.graph.splits()[1].train[0] == 0);
}

TEST_CASE("loader is idempotent: two loads are bitwise identical") {
    TempDir tmp;
    write_toy(tmp.path);
    auto a = load_webkb(tmp.str());
    auto b = load_webkb(tmp.str());
    REQUIRE(a.graph.features().size() == b.graph.features().size());
    for (std::size_t i = 0; i < a.graph.features().size(); ++i)
        CHECK(a.graph.features().data()[i] == b.graph.features().data()[i]);
    CHECK(a.graph.edges() == b.graph.edges());
}

TEST_CASE("parse errors name the offending line") {
    TempDir tmp;
    write_toy(tmp.path);
    write_file(tmp.path / "edges.txt", "0 1\n2\n");  // truncated edge line
    try {
        load_webkb(tmp.str());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }

    write_toy(tmp.path);
    write_file(tmp.path / "nodes.txt", "0\t1,0\t0\nbroken line\n");
    CHECK_THROWS_AS(load_webkb(tmp.str()), ParseError);
}

TEST_CASE("missing files raise integrity errors") {
    TempDir tmp;
    write_toy(tmp.path);
    fs::remove(tmp.path / "nodes.txt");
    CHECK_THROWS_AS(load_webkb(tmp.str()), IntegrityError);

    TempDir tmp2;
    write_toy(tmp2.path);
    fs::remove(tmp2.path / "splits.txt");
    CHECK_THROWS_AS(load_webkb(tmp2.str()), IntegrityError);
}

TEST_CASE("sparse and index feature formats") {
    TempDir tmp;
    write_file(tmp.path / "nodes.txt",
               "0\t0:0.5,3:1.25\t0\n"
               "1\t1:2.0\t1\n");
    write_file(tmp.path / "edges.txt", "0 1\n");
    auto ds = load_planetoid(tmp.str());
    CHECK(ds.stats.feature_dim == 4);
    CHECK(ds.graph.features().at(0, 3) == 1.25);
    CHECK(ds.graph.features().at(1, 1) == 2.0);
    CHECK(ds.stats.splits == 0);

    TempDir tmp2;
    write_file(tmp2.path / "nodes.txt",
               "0\t0,3\t0\n"
               "1\t2\t1\n");
    write_file(tmp2.path / "edges.txt", "0 1\n");
    write_file(tmp2.path / "splits.txt", "0 train 0\n0 val 1\n0 test\n");
    write_file(tmp2.path / "manifest.txt", "feature_format = indices\n");
    auto ds2 = load_webkb(tmp2.str());
    CHECK(ds2.stats.feature_dim == 4);
    CHECK(ds2.graph.features().at(0, 0) == 1.0);
    CHECK(ds2.graph.features().at(0, 3) == 1.0);
    CHECK(ds2.graph.features().at(1, 2) == 1.0);
}

TEST_CASE("row normalization flag") {
    TempDir tmp;
    write_toy(tmp.path);
    auto ds = load_webkb(tmp.str(), /*row_normalize=*/true);
    for (int i = 0; i < ds.graph.num_nodes(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < ds.graph.feature_dim(); ++j)
            sum += std::fabs(ds.graph.features().at(i, j));
        CHECK(sum == doctest::Approx(1.0));
    }
}

TEST_CASE("validate_dataset reports every failing field") {
    TempDir tmp;
    write_toy(tmp.path);
    auto ds = load_webkb(tmp.str());
    try {
        validate_dataset("cornell", ds);
        FAIL("expected IntegrityError");
    } catch (const IntegrityError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("nodes") != std::string::npos);
        CHECK(msg.find("feature_dim") != std::string::npos);
        CHECK(msg.find("classes") != std::string::npos);
    }
    CHECK_THROWS_AS(validate_dataset("unknown-name", ds), ArgumentError);
}

TEST_CASE("manifest round-trip and checksum tamper detection") {
    TempDir tmp;
    // a synthetic directory shaped like texas passes validation: 183 nodes,
    // 1703 features, 5 classes, homophily near 0.11
    test_support::write_texas_shaped_dataset(tmp.path);

    auto ds = load_webkb(tmp.str());
    validate_dataset("texas", ds);
    auto manifest = build_manifest("texas", tmp.str(), ds);
    CHECK(manifest.get_int("nodes") == 183);
    CHECK(manifest.get("checksum_nodes").substr(0, 8) == "fnv1a64:");
    manifest.write_file((tmp.path / "manifest.txt").string());

    auto reloaded = load_dataset("texas", tmp.str());
    CHECK(reloaded.stats.nodes == 183);

    // tampering with a file now trips the checksum
    std::ofstream(tmp.path / "edges.txt", std::ios::app) << "0 9\n";
    CHECK_THROWS_AS(load_dataset("texas", tmp.str()), IntegrityError);
}

TEST_CASE("per-class-20 splits: sizes, disjointness, determinism") {
    Graph g = synth_graph(200, 4, 0.05, 0.05, 0.5, 99);
    auto m1 = make_split_per_class20(g, 7, 50);
    auto m2 = make_split_per_class20(g, 7, 50);
    int train = 0, val = 0, test = 0;
    for (int i = 0; i < 200; ++i) {
        train += m1.train[i];
        val += m1.val[i];
        test += m1.test[i];
        CHECK(int(m1.train[i]) + int(m1.val[i]) + int(m1.test[i]) <= 1);
        CHECK(m1.train[i] == m2.train[i]);
        CHECK(m1.val[i] == m2.val[i]);
        CHECK(m1.test[i] == m2.test[i]);
    }
    CHECK(train == 80);  // 4 classes x 20
    CHECK(val == 50);
    CHECK(test == 70);

    auto m3 = make_split_per_class20(g, 8, 50);
    bool differs = false;
    for (int i = 0; i < 200; ++i) differs = differs || (m3.train[i] != m1.train[i]);
    CHECK(differs);

    // 7 classes x 20 = 140, the citation-benchmark sizing
    Graph g7 = synth_graph(700, 7, 0.02, 0.02, 0.5, 100);
    auto m7 = make_split_per_class20(g7, 1, 500);
    int t7 = 0;
    for (auto b : m7.train) t7 += b;
    CHECK(t7 == 140);

    // a class with zero nodes is a state error
    std::vector<int> gappy(10, 0);
    gappy[3] = 2;  // classes 0 and 2 exist, class 1 empty
    Graph bad(10, {{0, 1}}, Tensor::zeros(10, 2), gappy);
    CHECK_THROWS_AS(make_split_per_class20(bad, 1), StateError);
}

TEST_CASE("synth_graph homophily endpoints and midpoint") {
    Graph pure = synth_graph(120, 4, 0.2, 0.0, 0.3, 11);
    CHECK(homophily_ratio(pure) == 1.0);

    Graph anti = synth_graph(120, 4, 0.0, 0.2, 0.3, 12);
    CHECK(homophily_ratio(anti) == 0.0);

    Graph mixed = synth_graph(200, 4, 0.1, 0.1, 0.3, 13);
    CHECK(std::fabs(homophily_ratio(mixed) - 0.25) < 0.1);
}

TEST_CASE("file checksum is content-determined") {
    TempDir tmp;
    write_file(tmp.path / "a.txt", "hello\n");
    write_file(tmp.path / "b.txt", "hello\n");
    write_file(tmp.path / "c.txt", "hellp\n");
    CHECK(file_checksum((tmp.path / "a.txt").string()) ==
          file_checksum((tmp.path / "b.txt").string()));
    CHECK(file_checksum((tmp.path / "a.txt").string()) !=
          file_checksum((tmp.path / "c.txt").string()));
}

TEST_CASE("benchmark datasets match published statistics when present" *
          doctest::skip(!test_support::have_datasets())) {
    for (const auto& exp : known_datasets()) {
        auto ds = load_dataset(exp.name, test_support::dataset_dir(exp.name));
        CHECK(ds.stats.nodes == exp.nodes);
        CHECK(ds.stats.feature_dim == exp.feature_dim);
        CHECK(ds.stats.classes == exp.classes);
        CHECK(std::fabs(ds.stats.homophily - exp.homophily) <= 0.03);
    }
}
