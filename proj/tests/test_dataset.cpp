#include "doctest.h"

#include "hemi/dataset.hpp"
#include "hemi/error.hpp"
#include "hemi/pipeline.hpp"
#include "test_support.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace hemi;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

dataset_paths toy(const fs::path& dir) {
    write_file(dir / "nodes.tsv", "p1\tpaper\np2\tpaper\na1\tauthor\n");
    write_file(dir / "relations.tsv", "pa\tpaper\tauthor\n");
    write_file(dir / "edges.tsv", "p1\tpa\ta1\np2\tpa\ta1\n");
    return {dir / "nodes.tsv", dir / "relations.tsv", dir / "edges.tsv", {}, {}, "paper"};
}

std::string error_of(const dataset_paths& paths) {
    try {
        ingest(paths);
    } catch (const data_error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("ingest a three-node graph") {
    testing::temp_dir dir("ingest");
    const auto d = ingest(toy(dir.path()));
    CHECK(d.graph.target_count() == 2);
    CHECK(d.graph.edges(0).size() == 2);
    CHECK(d.identity_features);
    CHECK(d.features == tensor::identity(2));
    CHECK_FALSE(d.has_labels());
    CHECK(d.node_ids[0] == std::vector<std::string>{"p1", "p2"});
    const auto mpg = compose_metapath(d.graph, parse_metapath(d.graph, "pa.~pa"));
    CHECK(mpg.has_edge(0, 1));
}

TEST_CASE("ingest errors name the file and line") {
    testing::temp_dir dir("ingest_err");
    auto paths = toy(dir.path());

    SUBCASE("unknown relation") {
        write_file(paths.edges, "p1\tpa\ta1\np2\twrites\ta1\n");
        CHECK(error_of(paths).find("edges.tsv:2:") != std::string::npos);
        CHECK(error_of(paths).find("writes") != std::string::npos);
    }
    SUBCASE("signature mismatch") {
        write_file(paths.edges, "a1\tpa\tp1\n");
        CHECK(error_of(paths).find("edges.tsv:1:") != std::string::npos);
    }
    SUBCASE("duplicate node id") {
        write_file(paths.nodes, "p1\tpaper\np2\tpaper\np1\tauthor\n");
        CHECK(error_of(paths).find("nodes.tsv:3:") != std::string::npos);
    }
    SUBCASE("ragged feature rows") {
        paths.features = dir.path() / "features.tsv";
        write_file(paths.features, "p1\t1\t2\np2\t3\n");
        CHECK(error_of(paths).find("features.tsv:2:") != std::string::npos);
    }
    SUBCASE("unknown target type") {
        paths.target_type = "venue";
        CHECK(error_of(paths).find("venue") != std::string::npos);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(ingest({dir.path() / "none.tsv", {}, {}, {}, {}, "paper"}), data_error); }
}

TEST_CASE("features and labels") {
    testing::temp_dir dir("feat");
    auto paths = toy(dir.path());
    paths.features = dir.path() / "features.tsv";
    paths.labels = dir.path() / "labels.tsv";

    SUBCASE("given rows are used as is") {
        write_file(paths.features, "p1\t1\t2\np2\t3\t4\n");
        write_file(paths.labels, "p1\t10\np2\t9\n");
        const auto d = ingest(paths);
        CHECK(d.features == tensor::matrix(2, 2, {1, 2, 3, 4}));
        CHECK(d.class_names == std::vector<std::string>{"9", "10"});
        CHECK(d.full_labels() == std::vector<std::size_t>{1, 0});
    }
    SUBCASE("missing rows get identity columns") {
        write_file(paths.features, "p1\t1\t2\n");
        write_file(paths.labels, "p2\tb\n");
        const auto d = ingest(paths);
        CHECK(d.features == tensor::matrix(2, 4, {1, 2, 0, 0, 0, 0, 0, 1}));
        CHECK(d.labels[0] == unlabeled);
        CHECK_THROWS_AS(d.full_labels(), data_error);
    }
}

TEST_CASE("write_dataset then ingest gives the same dataset") {
    testing::temp_dir dir("roundtrip");
    synthetic_spec spec;
    spec.feature_dim = 3;
    const dataset a = generate_synthetic(spec);
    const dataset b = ingest(write_dataset(a, dir.path()));
    CHECK(a.graph == b.graph);
    CHECK(a.node_ids == b.node_ids);
    CHECK(a.labels == b.labels);
    CHECK(a.class_names == b.class_names);
    for (std::size_t i = 0; i < a.features.size(); ++i)
        CHECK(a.features.values()[i] == doctest::Approx(b.features.values()[i]).epsilon(1e-12));
}

TEST_CASE("synthetic generator") {
    synthetic_spec spec;
    spec.blocks = 2;
    spec.papers_per_block = 30;
    const dataset d = generate_synthetic(spec);
    CHECK(d.graph.target_count() == 60);
    CHECK(d.full_labels().size() == 60);

    // Paper-author density inside blocks against across blocks.
    const auto pa = *d.graph.find_relation("pa");
    double intra = 0.0, inter = 0.0;
    for (const auto& e : d.graph.edges(pa)) (d.labels[e.src] == e.dst / spec.authors_per_block ? intra : inter) += 1.0;
    const double intra_pairs = 2.0 * 30 * 10, inter_pairs = 2.0 * 30 * 10;
    CHECK(intra / intra_pairs >= 5.0 * inter / inter_pairs);

    testing::temp_dir a("syn_a"), b("syn_b");
    make_synthetic(spec, a.path());
    make_synthetic(spec, b.path());
    for (const char* f : {"nodes.tsv", "relations.tsv", "edges.tsv", "labels.tsv"})
        CHECK(read_file(a.path() / f) == read_file(b.path() / f));
    CHECK(read_file(a.path() / "hemi.conf").find("pa.~pa") != std::string::npos);

    spec.papers_per_block = 0;
    CHECK_THROWS_AS(spec.validate(), usage_error);
    spec.papers_per_block = 5;
    spec.pa_intra = 1.5;
    CHECK_THROWS_AS(generate_synthetic(spec), usage_error);
}

TEST_CASE("run configuration") {
    testing::temp_dir dir("conf");
    write_file(dir.path() / "run.conf", "nodes = data/nodes.tsv\nmetapaths = pa.~pa, ps.~ps\nd = 32\nlambda = 0.25\n");

    SUBCASE("relative paths resolve against the config directory") {
        const auto c = load_run_config(dir.path() / "run.conf", {});
        CHECK(c.data.nodes == dir.path() / "data/nodes.tsv");
        CHECK(c.metapaths == std::vector<std::string>{"pa.~pa", "ps.~ps"});
        CHECK(c.model.d == 32);
        CHECK(c.model.lambda == 0.25);
        CHECK(c.checkpoint_dir() == fs::path("hemi_out") / "checkpoint");
    }
    SUBCASE("overrides win and HEMI_SEED sets the seed") {
        key_values o;
        o.set("d", "8");
        o.set("seed", "4");
        auto c = load_run_config(dir.path() / "run.conf", o);
        CHECK(c.model.d == 8);
        CHECK(c.model.seed == 4);
        ::setenv("HEMI_SEED", "77", 1);
        c = load_run_config(dir.path() / "run.conf", o);
        ::unsetenv("HEMI_SEED");
        CHECK(c.model.seed == 77);
    }
    SUBCASE("bad keys and values are usage errors") {
        key_values o;
        o.set("dimension", "8");
        CHECK_THROWS_AS(load_run_config(dir.path() / "run.conf", o), usage_error);
        key_values l;
        l.set("lambda", "3");
        CHECK_THROWS_AS(load_run_config(dir.path() / "run.conf", l), usage_error);
        CHECK_THROWS_AS(load_run_config(dir.path() / "missing.conf", {}), usage_error);
    }
}

TEST_CASE("run maps failures to exit codes") {
    testing::temp_dir dir("exit");
    std::ostringstream out, err;
    run_config c;
    c.output = dir.path() / "out";
    CHECK(run("no-such-command", c, out, err) == 1);

    c.data = toy(dir.path());
    c.data.target_type = "venue";
    CHECK(run("ingest-check", c, out, err) == 2);

    c.data.target_type = "paper";
    c.metapaths = {"pa.pa"};
    CHECK(run("ingest-check", c, out, err) == 2);

    c.metapaths = {"pa.~pa"};
    CHECK(run("ingest-check", c, out, err) == 0);
    CHECK(out.str().find("paper") != std::string::npos);
}

TEST_CASE("train, embed and evaluate through the pipeline") {
    testing::temp_dir dir("pipe");
    std::ostringstream out, err;
    run_config c;
    c.output = dir.path();
    c.quiet = true;
    c.synthetic.papers_per_block = 10;
    REQUIRE(run("make-synthetic", c, out, err) == 0);

    key_values o;
    o.set("epochs", "20");
    o.set("d", "8");
    o.set("cluster_restarts", "2");
    o.set("quiet", "true");
    o.set("output", (dir.path() / "run").string());
    const auto cfg = load_run_config(dir.path() / "hemi.conf", o);
    REQUIRE(run("train", cfg, out, err) == 0);
    CHECK(fs::exists(dir.path() / "run" / "checkpoint" / "manifest.txt"));
    const tensor trained = [&] {
        std::ifstream in(dir.path() / "run" / "embeddings.tsv");
        return read_tsv(in);
    }();
    CHECK(trained.rows() == 30);
    CHECK(trained.cols() == 8);

    REQUIRE(run("eval-cluster", cfg, out, err) == 0);
    std::ifstream metrics(dir.path() / "run" / "metrics_cluster.tsv");
    const auto rows = read_metrics_tsv(metrics);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].metric == "nmi");
    CHECK(rows[0].value >= 0.0);
    CHECK(rows[0].value <= 1.0);

    auto embed_cfg = cfg;
    embed_cfg.output = dir.path() / "again";
    embed_cfg.checkpoint = dir.path() / "run" / "checkpoint";
    REQUIRE(run("embed", embed_cfg, out, err) == 0);
    std::ifstream again(dir.path() / "again" / "embeddings.tsv");
    CHECK(read_tsv(again) == trained);
}
