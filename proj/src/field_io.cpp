#include <bit>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "grftopo/field_sampler.hpp"

namespace grftopo {

namespace {

constexpr char kMagic[8] = {'G', 'R', 'F', 'T', 'O', 'P', 'O', '1'};

template <class T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  v = to_little_endian(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_f64(std::ostream& os, double v) {
  v = to_little_endian(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little_endian(v);
}

double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return to_little_endian(v);
}

}  // namespace

void save_field(const GridField& field, const std::filesystem::path& path) {
  const auto& prov = field.provenance();
  nlohmann::json header = {
      {"format", "grftopo-field"},
      {"version", 1},
      {"shape", field.shape()},
      {"period", field.period()},
      {"provenance",
       {{"model", prov.model},
        {"master_seed", prov.master_seed},
        {"replicate", prov.replicate},
        {"seed", prov.seed}}},
  };
  if (field.spectrum()) {
    header["spectrum"] = {{"constant_bits", std::bit_cast<std::uint64_t>(field.spectrum()->constant)},
                          {"terms", field.spectrum()->terms.size()}};
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write(kMagic, sizeof kMagic);
  write_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : field.values()) write_f64(os, v);
  if (field.spectrum()) {
    for (const auto& t : field.spectrum()->terms) {
      for (int d = 0; d < field.dimension(); ++d) write_f64(os, t.k[d]);
      write_f64(os, t.c.real());
      write_f64(os, t.c.imag());
    }
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

GridField load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path.string() + " is not a grftopo field file");
  const std::uint64_t len = read_u64(is);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  auto shape = header.at("shape").get<std::vector<int>>();
  auto period = header.at("period").get<std::vector<double>>();
  std::size_t total = 1;
  for (int m : shape) total *= static_cast<std::size_t>(m);
  std::vector<double> values(total);
  for (double& v : values) v = read_f64(is);

  std::optional<SpectralRepresentation> spectrum;
  if (header.contains("spectrum")) {
    SpectralRepresentation rep;
    rep.constant = std::bit_cast<double>(header["spectrum"].at("constant_bits").get<std::uint64_t>());
    const auto count = header["spectrum"].at("terms").get<std::size_t>();
    rep.terms.resize(count);
    const int n = static_cast<int>(shape.size());
    for (auto& t : rep.terms) {
      for (int d = 0; d < n; ++d) {
        t.k[d] = static_cast<int>(read_f64(is));
        t.xi[d] = 2.0 * std::numbers::pi * t.k[d] / period[d];
        rep.max_k[d] = std::max(rep.max_k[d], std::abs(t.k[d]));
      }
      const double re = read_f64(is);
      const double im = read_f64(is);
      t.c = {re, im};
    }
    spectrum = std::move(rep);
  }
  if (!is) throw std::runtime_error(path.string() + " is truncated");

  Provenance prov;
  const auto& p = header.at("provenance");
  prov.model = p.at("model");
  prov.master_seed = p.at("master_seed").get<std::uint64_t>();
  prov.replicate = p.at("replicate").get<std::uint64_t>();
  prov.seed = p.at("seed").get<std::uint64_t>();
  return GridField(std::move(shape), std::move(period), std::move(values), std::move(spectrum),
                   std::move(prov));
}

}  // namespace grftopo
