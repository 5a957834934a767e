#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "fusenet/errors.hpp"
#include "fusenet/io.hpp"
#include "fusenet/phantom.hpp"
#include "fusenet/rng.hpp"

using namespace fusenet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path()
               / ("fusenet_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

SubjectVolume tiny_volume(const std::string& id, const std::vector<std::string>& mods,
                          std::uint64_t seed) {
    SubjectVolume v;
    v.id = id;
    v.h = 6;
    v.w = 5;
    v.modalities = mods;
    v.mask = Mask(6, 5);
    Pcg64 rng(seed);
    for (std::size_t m = 0; m < mods.size(); ++m) {
        Image img(6, 5);
        for (double& x : img.v) x = rng.uniform(-2.0, 2.0);
        v.planes.push_back(img);
    }
    for (auto& b : v.mask.v) b = static_cast<std::uint8_t>(rng.bounded(2));
    return v;
}

} // namespace

TEST_CASE("image container layout is one header line plus little-endian doubles") {
    TempDir tmp;
    Image img(2, 3);
    img.v = {1.0, -2.5, 0.0, 3.25, 1e-3, -0.0};
    write_image(tmp.file("img.mmimg"), img);

    std::string bytes = slurp(tmp.file("img.mmimg"));
    const std::string header = "MMIMG 1 3 2\n"; // width before height
    REQUIRE(bytes.size() == header.size() + 6 * 8);
    CHECK(bytes.substr(0, header.size()) == header);

    // 1.0 in IEEE little-endian is 00..00 f0 3f
    const unsigned char one[8] = {0, 0, 0, 0, 0, 0, 0xf0, 0x3f};
    CHECK(std::memcmp(bytes.data() + header.size(), one, 8) == 0);
    for (std::size_t i = 0; i < img.v.size(); ++i) {
        double back;
        std::memcpy(&back, bytes.data() + header.size() + 8 * i, 8);
        CHECK(std::memcmp(&back, &img.v[i], 8) == 0);
    }

    Image rt = read_image(tmp.file("img.mmimg"));
    CHECK(rt.h == 2);
    CHECK(rt.w == 3);
    CHECK(rt.v == img.v);
}

TEST_CASE("image reader rejects malformed containers") {
    TempDir tmp;
    Image img(2, 2);
    img.v = {1.0, 2.0, 3.0, 4.0};
    write_image(tmp.file("ok.mmimg"), img);
    std::string good = slurp(tmp.file("ok.mmimg"));

    auto expect_parse_error = [&](const std::string& bytes) {
        spit(tmp.file("bad.mmimg"), bytes);
        CHECK_THROWS_AS(read_image(tmp.file("bad.mmimg")), ParseError);
    };

    expect_parse_error("MMJPG 1 2 2\n" + good.substr(12));        // magic
    expect_parse_error("MMIMG 2 2 2\n" + good.substr(12));        // version
    expect_parse_error("MMIMG 1 2 2 9\n" + good.substr(12));      // extra token
    expect_parse_error("MMIMG 1 x 2\n" + good.substr(12));        // non-numeric
    expect_parse_error("MMIMG 1 0 2\n");                          // zero dim
    expect_parse_error(good.substr(0, good.size() - 1));          // truncated
    expect_parse_error(good + "x");                               // trailing byte
    expect_parse_error(std::string(200, 'z'));                    // no newline
    CHECK_THROWS_AS(read_image(tmp.file("absent.mmimg")), IoError);
    CHECK_THROWS_AS(write_image(tmp.file("e.mmimg"), Image()), PreconditionError);
}

TEST_CASE("masks ride the image container restricted to zero and one") {
    TempDir tmp;
    Mask mask(3, 4);
    for (std::size_t i = 0; i < mask.v.size(); ++i) mask.v[i] = i % 3 == 0 ? 1 : 0;
    write_mask(tmp.file("mask.mmimg"), mask);
    Mask rt = read_mask(tmp.file("mask.mmimg"));
    CHECK(rt.h == 3);
    CHECK(rt.w == 4);
    CHECK(rt.v == mask.v);

    // the same bytes parse as an image of exact zeros and ones
    Image as_img = read_image(tmp.file("mask.mmimg"));
    for (std::size_t i = 0; i < as_img.v.size(); ++i)
        CHECK(as_img.v[i] == (mask.v[i] ? 1.0 : 0.0));

    Image fraction(2, 2);
    fraction.v = {0.0, 1.0, 0.5, 1.0};
    write_image(tmp.file("frac.mmimg"), fraction);
    CHECK_THROWS_AS(read_mask(tmp.file("frac.mmimg")), ParseError);
}

TEST_CASE("labelmap graymaps are written as flat P5 with 0/255 pixels") {
    TempDir tmp;
    Labelmap lab("s0", 2, 3);
    lab.v = {1, 0, 1, 0, 0, 1};
    write_labelmap_pgm(tmp.file("lab.pgm"), lab);

    std::string bytes = slurp(tmp.file("lab.pgm"));
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(bytes.size() == header.size() + 6);
    CHECK(bytes.substr(0, header.size()) == header);
    const unsigned char want[6] = {255, 0, 255, 0, 0, 255};
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(static_cast<unsigned char>(bytes[header.size() + i]) == want[i]);

    Labelmap rt = read_labelmap_pgm(tmp.file("lab.pgm"));
    CHECK(rt.h == 2);
    CHECK(rt.w == 3);
    CHECK(rt.v == lab.v);
}

TEST_CASE("labelmap reader accepts comments and rejects graymap violations") {
    TempDir tmp;
    std::string pixels;
    for (unsigned char c : {0, 255, 255, 0, 255, 0}) pixels.push_back(static_cast<char>(c));

    spit(tmp.file("c.pgm"), "P5\n# produced elsewhere\n 3 # inline\n2\n255\n" + pixels);
    Labelmap lab = read_labelmap_pgm(tmp.file("c.pgm"));
    CHECK(lab.h == 2);
    CHECK(lab.w == 3);
    CHECK(lab.v == std::vector<std::uint8_t>{0, 1, 1, 0, 1, 0});

    auto expect_parse_error = [&](const std::string& bytes) {
        spit(tmp.file("bad.pgm"), bytes);
        CHECK_THROWS_AS(read_labelmap_pgm(tmp.file("bad.pgm")), ParseError);
    };
    expect_parse_error("P2\n3 2\n255\n" + pixels);          // ascii graymap
    expect_parse_error("P5\n3 2\n128\n" + pixels);          // wrong maxval
    expect_parse_error("P5\n3 2\n255\n" + pixels.substr(1)); // short payload
    expect_parse_error("P5\n3 2\n255\n" + pixels + "x");    // long payload
    std::string gray = pixels;
    gray[2] = 7;
    expect_parse_error("P5\n3 2\n255\n" + gray);            // mid-gray pixel
}

TEST_CASE("heatmaps round trip through the image container") {
    TempDir tmp;
    Heatmap heat("s1", 2, 2);
    heat.v = {0.0, 0.25, 0.75, 1.0};
    write_heatmap(tmp.file("h.mmimg"), heat);
    Heatmap rt = read_heatmap(tmp.file("h.mmimg"));
    CHECK(rt.h == 2);
    CHECK(rt.w == 2);
    CHECK(rt.v == heat.v);

    Image bad(1, 2);
    bad.v = {0.5, 1.5};
    write_image(tmp.file("bad.mmimg"), bad);
    CHECK_THROWS_AS(read_heatmap(tmp.file("bad.mmimg")), ParseError);
}

TEST_CASE("heatmap graymap scales probability by 255 with rounding and clamping") {
    TempDir tmp;
    Heatmap heat("s1", 1, 6);
    heat.v = {0.0, 0.25, 0.5, 1.0, -0.5, 1.5}; // last two only via hand construction
    write_heatmap_pgm(tmp.file("h.pgm"), heat);
    std::string bytes = slurp(tmp.file("h.pgm"));
    const std::string header = "P5\n6 1\n255\n";
    REQUIRE(bytes.size() == header.size() + 6);
    const unsigned char want[6] = {0, 64, 128, 255, 0, 255}; // lround(63.75) = 64
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(static_cast<unsigned char>(bytes[header.size() + i]) == want[i]);
}

TEST_CASE("model files round trip parameters exactly and drop transient state") {
    TempDir tmp;
    BaseConfig cfg;
    cfg.conv1_filters = 4;
    cfg.conv2_filters = 6;
    cfg.dense_width = 16;
    cfg.seed = 5;

    for (FusionScheme s :
         {FusionScheme::Single, FusionScheme::Type1, FusionScheme::Type2, FusionScheme::Type3}) {
        std::vector<std::string> mods =
            s == FusionScheme::Single ? std::vector<std::string>{"t2"}
                                      : std::vector<std::string>{"pet", "t2"};
        TrainedNetwork net = assemble_network(s, mods, cfg, 8);
        net.history.push_back({{0.5, 0.75}});      // not persisted
        net.parts[0].params.layers[0].vw.fill(1.0); // momentum, not persisted

        std::string path = tmp.file(std::string(scheme_name(s)) + ".model");
        save_model(path, net);
        TrainedNetwork rt = load_model(path);

        CHECK(rt.scheme == net.scheme);
        CHECK(rt.patch == net.patch);
        CHECK(rt.modalities == net.modalities);
        CHECK(rt.history.empty());
        REQUIRE(rt.parts.size() == net.parts.size());
        for (std::size_t p = 0; p < net.parts.size(); ++p) {
            CHECK(rt.parts[p].name == net.parts[p].name);
            CHECK(rt.parts[p].spec.input == net.parts[p].spec.input);
            REQUIRE(rt.parts[p].params.layers.size() == net.parts[p].params.layers.size());
            for (std::size_t l = 0; l < net.parts[p].params.layers.size(); ++l) {
                const LayerParams& a = net.parts[p].params.layers[l];
                const LayerParams& b = rt.parts[p].params.layers[l];
                CHECK(a.w.data == b.w.data);
                CHECK(a.b.data == b.b.data);
                for (double v : b.vw.data) CHECK(v == 0.0);
                for (double v : b.vb.data) CHECK(v == 0.0);
            }
        }
    }
}

TEST_CASE("loaded models predict identically to the saved originals") {
    TempDir tmp;
    BaseConfig cfg;
    cfg.conv1_filters = 4;
    cfg.conv2_filters = 6;
    cfg.dense_width = 16;
    cfg.seed = 3;
    std::vector<std::string> mods = {"a", "b"};
    TrainedNetwork net = assemble_network(FusionScheme::Type2, mods, cfg, 8);
    save_model(tmp.file("m.model"), net);
    TrainedNetwork rt = load_model(tmp.file("m.model"));

    Tensor batch({3, 8, 8, 2});
    Pcg64 rng(11);
    for (double& x : batch.data) x = rng.gaussian();
    Tensor a = scheme_forward(net, batch);
    Tensor b = scheme_forward(rt, batch);
    CHECK(a.data == b.data);
}

TEST_CASE("model loader rejects tampered files") {
    TempDir tmp;
    BaseConfig cfg;
    cfg.conv1_filters = 4;
    cfg.conv2_filters = 6;
    cfg.dense_width = 16;
    TrainedNetwork net = assemble_network(FusionScheme::Single, {"a"}, cfg, 8);
    save_model(tmp.file("m.model"), net);
    std::string good = slurp(tmp.file("m.model"));

    auto rewrite = [&](std::string bytes) {
        spit(tmp.file("bad.model"), bytes);
        return tmp.file("bad.model");
    };
    auto replace_once = [&](const std::string& from, const std::string& to) {
        std::string bytes = good;
        std::size_t at = bytes.find(from);
        REQUIRE(at != std::string::npos);
        bytes.replace(at, from.size(), to);
        return bytes;
    };

    CHECK_THROWS_AS(load_model(rewrite("FUSENET-MODEL 2\n" + good.substr(16))), ParseError);
    // network structure must match the declared scheme
    CHECK_THROWS_AS(load_model(rewrite(replace_once("scheme single", "scheme type2 "))),
                    ParseError);
    // patch size must agree with the part input shapes
    CHECK_THROWS_AS(load_model(rewrite(replace_once("patch 8", "patch 9"))), ParseError);
    // any payload length drift is fatal
    CHECK_THROWS_AS(load_model(rewrite(good.substr(0, good.size() - 8))), ParseError);
    CHECK_THROWS_AS(load_model(rewrite(good + std::string(8, '\0'))), ParseError);
    // unknown layer kinds are rejected
    CHECK_THROWS_AS(load_model(rewrite(replace_once("softmax", "sotfmax"))), ParseError);
    // descriptor must terminate
    CHECK_THROWS_AS(load_model(rewrite(good.substr(0, good.find("end\n")))), ParseError);

    // non-finite parameters are rejected at load time
    std::string poisoned = good;
    std::size_t payload = poisoned.find("end\n") + 4;
    double nan = std::nan("");
    std::memcpy(poisoned.data() + payload + 16, &nan, 8);
    CHECK_THROWS_AS(load_model(rewrite(poisoned)), NumericError);

    CHECK_NOTHROW(load_model(rewrite(good)));
}

TEST_CASE("cohort directories round trip bit-exactly") {
    TempDir tmp;
    PhantomConfig cfg = make_phantom_config({"pet", "t2"});
    cfg.height = 48;
    cfg.width = 46;
    cfg.cohort = 3;
    cfg.axis_min = 4.0;
    cfg.axis_max = 8.0;
    cfg.seed = 13;
    std::vector<SubjectVolume> cohort = generate_cohort(cfg);

    std::string dir = tmp.file("cohort");
    write_cohort(dir, cohort);
    std::vector<SubjectVolume> back = load_cohort(dir);

    REQUIRE(back.size() == cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        CHECK(back[i].id == cohort[i].id);
        CHECK(back[i].h == cohort[i].h);
        CHECK(back[i].w == cohort[i].w);
        CHECK(back[i].modalities == cohort[i].modalities);
        CHECK(back[i].mask.v == cohort[i].mask.v);
        for (std::size_t m = 0; m < cohort[i].planes.size(); ++m)
            CHECK(back[i].planes[m].v == cohort[i].planes[m].v);
    }

    SubjectVolume one = load_subject((fs::path(dir) / "s001").string());
    CHECK(one.id == "s001");
    CHECK(one.mask.v == cohort[1].mask.v);
}

TEST_CASE("cohort loading reports structural problems") {
    TempDir tmp;
    CHECK_THROWS_AS(load_subject(tmp.file("nowhere")), IoError);
    CHECK_THROWS_AS(load_cohort(tmp.file("nowhere")), IoError);

    fs::create_directories(tmp.path / "empty");
    CHECK_THROWS_AS(load_cohort(tmp.file("empty")), IoError);

    fs::create_directories(tmp.path / "bare" / "s000");
    CHECK_THROWS_AS(load_subject((tmp.path / "bare" / "s000").string()), IoError);

    // modality image present but mask missing
    fs::create_directories(tmp.path / "nomask" / "s000");
    Image img(4, 4);
    write_image((tmp.path / "nomask" / "s000" / "a.mmimg").string(), img);
    CHECK_THROWS_AS(load_subject((tmp.path / "nomask" / "s000").string()), IoError);

    // subjects disagreeing on the modality set
    std::string mixed = tmp.file("mixed");
    write_cohort(mixed, {tiny_volume("s000", {"a"}, 1)});
    write_cohort(mixed, {tiny_volume("s001", {"a", "b"}, 2)});
    CHECK_THROWS_AS(load_cohort(mixed), PreconditionError);
}

TEST_CASE("run configs parse every key and assemble the phantom block") {
    TempDir tmp;
    std::string text =
        "# pipeline settings\n"
        "cohort_dir = data/cohort\n"
        "out_dir = results # inline comment\n"
        "modalities = t2, pet , ct\n"
        "schemes = single, type1\n"
        "conv1_filters = 8\n"
        "conv2_filters = 12\n"
        "dense_width = 32\n"
        "lr = 0.05\n"
        "momentum = 0.8\n"
        "batch = 16\n"
        "epochs = 3\n"
        "stop_accuracy = 0.97\n"
        "seed = 9\n"
        "folds = 4\n"
        "n_per_class = 50\n"
        "save_models = true\n"
        "save_maps = false\n"
        "\n"
        "phantom_subjects = 6\n"
        "phantom_height = 64\n"
        "phantom_width = 60\n"
        "phantom_axis_min = 5\n"
        "phantom_axis_max = 9\n"
        "phantom_core_fraction = 0.4\n"
        "phantom_seed = 77\n"
        "contrast_pet = 0.05, 0.95, 0.05, 0.1\n"
        "corrupt_ct = invert\n";
    spit(tmp.file("run.cfg"), text);

    RunConfig rc = parse_config(tmp.file("run.cfg"));
    CHECK(rc.cohort_dir == "data/cohort");
    CHECK(rc.out_dir == "results");
    CHECK(rc.modalities == std::vector<std::string>{"t2", "pet", "ct"});
    CHECK(rc.schemes == std::vector<std::string>{"single", "type1"});
    CHECK(rc.base.conv1_filters == 8);
    CHECK(rc.base.conv2_filters == 12);
    CHECK(rc.base.dense_width == 32);
    CHECK(rc.base.lr == 0.05);
    CHECK(rc.base.momentum == 0.8);
    CHECK(rc.base.batch == 16);
    CHECK(rc.base.epochs == 3);
    CHECK(rc.base.stop_accuracy == 0.97);
    CHECK(rc.base.seed == 9);
    CHECK(rc.folds == 4);
    CHECK(rc.n_per_class == 50);
    CHECK(rc.save_models);
    CHECK_FALSE(rc.save_maps);

    CHECK(rc.phantom.cohort == 6);
    CHECK(rc.phantom.height == 64);
    CHECK(rc.phantom.width == 60);
    CHECK(rc.phantom.axis_min == 5.0);
    CHECK(rc.phantom.axis_max == 9.0);
    CHECK(rc.phantom.core_fraction == 0.4);
    CHECK(rc.phantom.seed == 77);
    REQUIRE(rc.phantom.contrasts.size() == 3);
    CHECK(rc.phantom.contrasts[0].first == "ct"); // sorted regardless of list order
    CHECK(rc.phantom.contrasts[1].first == "pet");
    CHECK(rc.phantom.contrasts[2].first == "t2");
    CHECK(rc.phantom.contrasts[1].second.tumor == 0.95); // override applied
    CHECK(rc.phantom.contrasts[2].second.tumor == 0.80); // preset kept
    REQUIRE(rc.phantom.corruption.size() == 1);
    CHECK(rc.phantom.corruption[0].first == "ct");
    CHECK(rc.phantom.corruption[0].second == Corruption::Invert);

    CHECK_NOTHROW(validate_run_config(rc));
    CHECK(rc.modalities == std::vector<std::string>{"ct", "pet", "t2"});
}

TEST_CASE("phantom seed defaults to the training seed") {
    TempDir tmp;
    spit(tmp.file("run.cfg"), "modalities = a\nschemes = single\nseed = 123\n");
    RunConfig rc = parse_config(tmp.file("run.cfg"));
    CHECK(rc.phantom.seed == 123);
    CHECK(rc.folds == 10);
    CHECK(rc.n_per_class == 1000);
    CHECK(rc.out_dir == ".");
}

TEST_CASE("config parsing rejects malformed input") {
    TempDir tmp;
    auto expect_bad = [&](const std::string& text) {
        spit(tmp.file("bad.cfg"), text);
        CHECK_THROWS_AS(parse_config(tmp.file("bad.cfg")), PreconditionError);
    };
    expect_bad("modalities a\n");                       // no '='
    expect_bad("modalities =\n");                       // empty value
    expect_bad("= 3\n");                                // empty key
    expect_bad("wheels = 4\n");                         // unknown key
    expect_bad("epochs = many\n");                      // not a count
    expect_bad("epochs = -2\n");                        // negative count
    expect_bad("lr = fast\n");                          // not a number
    expect_bad("save_maps = yes\n");                    // not a flag
    expect_bad("modalities = a\ncontrast_b = 0,1,1,0\n"); // contrast for absent modality
    expect_bad("modalities = a\ncorrupt_b = invert\n"); // corruption for absent modality
    expect_bad("modalities = a\ncontrast_a = 0,1,1\n"); // short contrast tuple
    CHECK_THROWS_AS(parse_config(tmp.file("missing.cfg")), IoError);

    spit(tmp.file("mode.cfg"), "modalities = a\ncorrupt_a = blur\n");
    CHECK_THROWS_AS(parse_config(tmp.file("mode.cfg")), PreconditionError);
}

TEST_CASE("run config validation enforces cross-field rules") {
    RunConfig ok;
    ok.modalities = {"b", "a"};
    ok.schemes = {"single", "type1"};
    CHECK_NOTHROW(validate_run_config(ok));
    CHECK(ok.modalities == std::vector<std::string>{"a", "b"});

    auto expect_bad = [](RunConfig rc) {
        CHECK_THROWS_AS(validate_run_config(rc), PreconditionError);
    };
    RunConfig rc = ok;
    rc.modalities.clear();
    expect_bad(rc);

    rc = ok;
    rc.modalities = {"a", "a"};
    expect_bad(rc);

    rc = ok;
    rc.schemes.clear();
    expect_bad(rc);

    rc = ok;
    rc.schemes = {"single", "single"};
    expect_bad(rc);

    rc = ok;
    rc.schemes = {"type9"};
    expect_bad(rc);

    rc = ok;
    rc.modalities = {"a"};
    rc.schemes = {"type2"}; // fusion needs >= 2 modalities
    expect_bad(rc);

    rc = ok;
    rc.folds = 1;
    expect_bad(rc);

    rc = ok;
    rc.n_per_class = 0;
    expect_bad(rc);

    rc = ok;
    rc.base.batch = 0; // delegated to the training config check
    expect_bad(rc);
}

TEST_CASE("metric tables render a frozen csv layout") {
    CrossvalResult res;
    res.subject_ids = {"s000", "s001"};
    CrossvalRow row;
    row.scheme = "type1";
    row.modalities = {"a", "b"};
    row.subjects = {{0, 0, 0.5}, {1, 1, 0.75}};
    row.stats.accuracies = {0.5, 0.75};
    row.stats.median = 0.625;
    row.stats.q1 = 0.5625;
    row.stats.q3 = 0.6875;
    row.stats.min = 0.5;
    row.stats.max = 0.75;
    res.rows.push_back(row);

    CHECK(crossval_detail_csv(res) == "scheme,modalities,fold,subject,accuracy\n"
                                      "type1,a+b,0,s000,0.5\n"
                                      "type1,a+b,1,s001,0.75\n");
    CHECK(crossval_summary_csv(res) == "scheme,modalities,median,q1,q3,min,max\n"
                                       "type1,a+b,0.625,0.5625,0.6875,0.5,0.75\n");

    TempDir tmp;
    write_crossval_csvs(res, tmp.file("out"));
    CHECK(slurp(tmp.file("out") + "/metrics_detail.csv") == crossval_detail_csv(res));
    CHECK(slurp(tmp.file("out") + "/metrics_summary.csv") == crossval_summary_csv(res));
}

TEST_CASE("modalities join with plus signs") {
    CHECK(join_modalities({}) == "");
    CHECK(join_modalities({"a"}) == "a");
    CHECK(join_modalities({"pet", "t1", "t2"}) == "pet+t1+t2");
}

TEST_CASE("fmt_double emits the shortest exact decimal") {
    CHECK(fmt_double(0.0) == "0");
    CHECK(fmt_double(2.0) == "2");
    CHECK(fmt_double(0.5) == "0.5");
    CHECK(fmt_double(0.1) == "0.1");
    CHECK(fmt_double(1.0 / 3.0) == "0.3333333333333333");

    const double values[] = {0.0,       -0.0, 1.0,    -1.0,      0.1,    2.0 / 3.0, 1e-17,
                             3.14159,   1e300, 5e-324, -2.5e-8,  0.925,  123456789.0,
                             0.1 + 0.2, 1.0 / 7.0};
    for (double v : values) {
        std::string s = fmt_double(v);
        CHECK(s.size() <= 24);
        double back = 0.0;
        REQUIRE(std::sscanf(s.c_str(), "%lf", &back) == 1);
        CHECK(std::memcmp(&back, &v, 8) == 0);
    }
}
