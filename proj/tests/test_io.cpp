#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "esotune/errors.hpp"
#include "esotune/io.hpp"
#include "esotune/json_io.hpp"

using namespace esotune;

TEST_SUITE("io") {
  TEST_CASE("base64 and float blobs") {
    const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251, 252, 253};
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
    CHECK(base64_encode(std::vector<std::uint8_t>{'a', 'b', 'c'}) == "YWJj");
    const std::vector<double> v{0.0, -1.5, 1e-300, std::numeric_limits<double>::max(), 0.1};
    CHECK(decode_f64_le(encode_f64_le(v)) == v);
    std::string blob;
    append_f64_le(blob, v);
    CHECK(blob.size() == v.size() * 8);
    CHECK(read_f64_le(blob) == v);
    CHECK(static_cast<unsigned char>(blob[8 + 7]) == 0xBF);  // sign byte of -1.5 comes last
  }

  TEST_CASE("digests and number formatting") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(format_double(0.1) == "0.1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  }

  TEST_CASE("file writes are atomic and errors carry the path") {
    const auto p = std::filesystem::temp_directory_path() / "esotune_io_test.txt";
    write_file(p, "hello");
    CHECK(read_file(p) == "hello");
    try {
      read_file("/nonexistent/dir/file.txt");
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.path() == "/nonexistent/dir/file.txt");
    }
    // A regular file cannot serve as a parent directory.
    write_file(p, "blocker");
    CHECK_THROWS_AS(write_file(p / "sub" / "out.txt", "x"), IoError);
    std::filesystem::remove(p);
  }

  TEST_CASE("csv") {
    CsvWriter csv({"a", "b"});
    const double row[2] = {1.5, -2.0};
    csv.row(row);
    CHECK(csv.str() == "a,b\n1.5,-2\n");
    const double bad[1] = {1.0};
    CHECK_THROWS(csv.row(bad));
  }

  TEST_CASE("plant spec json round trip") {
    M1dParams p;
    p.b3 = 0.25;
    p.b4 = 0.1;
    p.b5 = 2.0;
    p.b6 = 0.5;
    p.b7 = 1.0;
    const auto spec = PlantSpec::m1d(p, 0.0059);
    const auto back = plant_spec_from_json(to_json(spec));
    CHECK(to_json(back) == to_json(spec));
    const auto j = to_json(spec);
    CHECK(j.contains("kind"));
    CHECK(j["params"].contains("b7"));
    CHECK(j.contains("sigma_n"));
  }

  TEST_CASE("config errors name the field") {
    Json j = Json::parse(R"({"kind":"ns","params":{"a1":1,"a2":0.5,"a3":1,"a4":1,"a5":0.15},"sigma_n":0.007})");
    try {
      plant_spec_from_json(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.path() == "plant.params.a6");
    }
    j["params"]["a6"] = 1.0;
    j["params"]["a7"] = 1.0;
    CHECK_THROWS_AS(plant_spec_from_json(j), ConfigError);

    Json s = Json::parse(R"({"dt":0.001,"x0":[1,0],"feedback":"sometimes"})");
    try {
      sim_config_from_json(s);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.path() == "sim.feedback");
    }
  }

  TEST_CASE("observer section") {
    CHECK(observer_from_json(Json::parse(R"({"omega_o":25})")) == gains_from_bandwidth(25));
    CHECK(observer_from_json(Json::parse(R"({"lambda":[-1,-2,-3]})")) == ObserverGains{6, 11, 6});
    CHECK_THROWS_AS(observer_from_json(Json::parse(R"({"omega_o":25,"lambda":[-1,-2,-3]})")), ConfigError);
    CHECK_THROWS_AS(observer_from_json(Json::parse(R"({"lambda":[-1,2,-3]})")), ConfigError);
  }
}
