#include "pchm/field.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pchm/rng.hpp"

namespace pchm {

static_assert(std::endian::native == std::endian::little,
              "field dump I/O assumes a little-endian host");

FieldLaw FieldLaw::constant(double c) {
  FieldLaw law;
  law.kind = Kind::Constant;
  law.constant_value = c;
  return law;
}

FieldLaw FieldLaw::iid_uniform(double lo, double hi) {
  FieldLaw law;
  law.kind = Kind::IidUniform;
  law.lo = lo;
  law.hi = hi;
  return law;
}

FieldLaw FieldLaw::bernoulli(double p, double value) {
  FieldLaw law;
  law.kind = Kind::Bernoulli;
  law.p = p;
  law.value = value;
  return law;
}

FieldLaw FieldLaw::iid_mixture(double p_zero, PositiveLaw positive) {
  FieldLaw law;
  law.kind = Kind::IidMixture;
  law.p_zero = p_zero;
  law.positive = positive;
  return law;
}

FieldLaw FieldLaw::layered(std::vector<LayeredRule> rules) {
  FieldLaw law;
  law.kind = Kind::Layered;
  law.rules = std::move(rules);
  return law;
}

std::string FieldLaw::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Constant:
      os << "constant(" << constant_value << ")";
      break;
    case Kind::IidUniform:
      os << "iid_uniform(" << lo << "," << hi << ")";
      break;
    case Kind::Bernoulli:
      os << "bernoulli(" << p << "," << value << ")";
      break;
    case Kind::IidMixture:
      os << "iid_mixture(p_zero=" << p_zero << ",";
      if (positive.kind == PositiveLaw::Kind::Constant)
        os << "constant(" << positive.a << "))";
      else
        os << "uniform(" << positive.a << "," << positive.b << "))";
      break;
    case Kind::Layered:
      os << "layered(" << rules.size() << " rules)";
      break;
    case Kind::Derived:
      os << "derived(" << note << ")";
      break;
  }
  return os.str();
}

nlohmann::json FieldLaw::to_json() const {
  nlohmann::json j;
  switch (kind) {
    case Kind::Constant:
      j["type"] = "constant";
      j["value"] = constant_value;
      break;
    case Kind::IidUniform:
      j["type"] = "iid_uniform";
      j["lo"] = lo;
      j["hi"] = hi;
      break;
    case Kind::Bernoulli:
      j["type"] = "bernoulli";
      j["p"] = p;
      j["value"] = value;
      break;
    case Kind::IidMixture:
      j["type"] = "iid_mixture";
      j["p_zero"] = p_zero;
      if (positive.kind == PositiveLaw::Kind::Constant) {
        j["positive"] = {{"type", "constant"}, {"value", positive.a}};
      } else {
        j["positive"] = {{"type", "uniform"}, {"lo", positive.a}, {"hi", positive.b}};
      }
      break;
    case Kind::Layered: {
      j["type"] = "layered";
      nlohmann::json rs = nlohmann::json::array();
      for (const auto& r : rules)
        rs.push_back({{"axis", r.bond_axis}, {"by", r.modulating_axis}, {"values", r.values}});
      j["rules"] = rs;
      break;
    }
    case Kind::Derived:
      j["type"] = "derived";
      j["note"] = note;
      break;
  }
  return j;
}

FieldLaw FieldLaw::from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") return constant(j.at("value").get<double>());
  if (type == "iid_uniform") return iid_uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
  if (type == "bernoulli") return bernoulli(j.at("p").get<double>(), j.at("value").get<double>());
  if (type == "iid_mixture") {
    const auto& pj = j.at("positive");
    PositiveLaw pos = pj.at("type").get<std::string>() == "constant"
                          ? PositiveLaw::constant(pj.at("value").get<double>())
                          : PositiveLaw::uniform(pj.at("lo").get<double>(), pj.at("hi").get<double>());
    return iid_mixture(j.at("p_zero").get<double>(), pos);
  }
  if (type == "layered") {
    std::vector<LayeredRule> rules;
    for (const auto& rj : j.at("rules")) {
      LayeredRule r;
      r.bond_axis = rj.at("axis").get<int>();
      r.modulating_axis = rj.value("by", rj.at("axis").get<int>());
      r.values = rj.at("values").get<std::vector<double>>();
      rules.push_back(std::move(r));
    }
    return layered(std::move(rules));
  }
  if (type == "derived") {
    FieldLaw law;
    law.kind = Kind::Derived;
    law.note = j.value("note", "");
    return law;
  }
  throw std::invalid_argument("unknown field law type: " + type);
}

ConductanceField::ConductanceField(TorusLattice lattice, double cap, FieldLaw law,
                                   std::uint64_t seed, Eigen::VectorXd weights)
    : lat_(lattice), cap_(cap), law_(std::move(law)), seed_(seed), weights_(std::move(weights)) {
  if (!(cap_ > 0)) throw std::invalid_argument("field cap must be positive");
  if (weights_.size() != lat_.n_bond_slots())
    throw std::invalid_argument("weight vector size does not match lattice");
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    const double w = weights_[i];
    if (!(w >= 0.0) || !(w <= cap_))
      throw std::invalid_argument("bond weight outside [0, cap]");
  }
}

namespace {

void validate_law(const FieldLaw& law, double cap) {
  auto in_range = [cap](double v) { return v >= 0.0 && v <= cap; };
  switch (law.kind) {
    case FieldLaw::Kind::Constant:
      if (!in_range(law.constant_value)) throw std::invalid_argument("constant value outside [0, cap]");
      break;
    case FieldLaw::Kind::IidUniform:
      if (!(law.lo <= law.hi) || !in_range(law.lo) || !in_range(law.hi))
        throw std::invalid_argument("uniform bounds outside [0, cap]");
      break;
    case FieldLaw::Kind::Bernoulli:
      if (!(law.p >= 0.0 && law.p <= 1.0)) throw std::invalid_argument("bernoulli p outside [0, 1]");
      if (!in_range(law.value)) throw std::invalid_argument("bernoulli value outside [0, cap]");
      break;
    case FieldLaw::Kind::IidMixture:
      if (!(law.p_zero >= 0.0 && law.p_zero <= 1.0))
        throw std::invalid_argument("mixture p_zero outside [0, 1]");
      if (law.positive.kind == PositiveLaw::Kind::Constant) {
        if (!in_range(law.positive.a)) throw std::invalid_argument("mixture value outside [0, cap]");
      } else {
        if (!(law.positive.a <= law.positive.b) || !in_range(law.positive.a) || !in_range(law.positive.b))
          throw std::invalid_argument("mixture uniform bounds outside [0, cap]");
      }
      break;
    case FieldLaw::Kind::Layered:
      if (law.rules.empty()) throw std::invalid_argument("layered law needs at least one rule");
      for (const auto& r : law.rules) {
        if (r.values.empty()) throw std::invalid_argument("layered rule needs values");
        for (double v : r.values)
          if (!in_range(v)) throw std::invalid_argument("layered value outside [0, cap]");
      }
      break;
    case FieldLaw::Kind::Derived:
      throw std::invalid_argument("derived laws cannot be sampled");
  }
}

double layered_weight(const FieldLaw& law, const TorusLattice& lat, std::int64_t site, int axis) {
  double w = 0.0;
  bool found = false;
  for (const auto& r : law.rules) {
    if (r.bond_axis != axis) continue;
    const int c = lat.coord(site, r.modulating_axis);
    w = r.values[static_cast<std::size_t>(c) % r.values.size()];
    found = true;
  }
  // Axes without a rule carry zero conductance.
  return found ? w : 0.0;
}

}  // namespace

ConductanceField sample_field(const FieldLaw& law, int dim, int side, double cap,
                              std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("dim must be >= 2");
  if (side < 2) throw std::invalid_argument("side must be >= 2");
  if (!(cap > 0)) throw std::invalid_argument("cap must be positive");
  validate_law(law, cap);
  for (const auto& r : law.rules) {
    if (r.bond_axis < 0 || r.bond_axis >= dim || r.modulating_axis < 0 || r.modulating_axis >= dim)
      throw std::invalid_argument("layered rule axis outside lattice dimension");
  }

  TorusLattice lat(dim, side);
  Eigen::VectorXd weights(lat.n_bond_slots());
  const std::int64_t n = lat.n_sites();
  for (std::int64_t site = 0; site < n; ++site) {
    for (int axis = 0; axis < dim; ++axis) {
      double w = 0.0;
      switch (law.kind) {
        case FieldLaw::Kind::Constant:
          w = law.constant_value;
          break;
        case FieldLaw::Kind::Layered:
          w = layered_weight(law, lat, site, axis);
          break;
        default: {
          CounterRng rng(cell_key(seed, static_cast<std::uint64_t>(site),
                                  static_cast<std::uint64_t>(axis)));
          if (law.kind == FieldLaw::Kind::IidUniform) {
            w = law.lo + (law.hi - law.lo) * rng.u01();
          } else if (law.kind == FieldLaw::Kind::Bernoulli) {
            w = rng.u01() < law.p ? law.value : 0.0;
          } else {  // IidMixture
            if (rng.u01() < law.p_zero) {
              w = 0.0;
            } else if (law.positive.kind == PositiveLaw::Kind::Constant) {
              w = law.positive.a;
            } else {
              w = law.positive.a + (law.positive.b - law.positive.a) * rng.u01();
            }
          }
          break;
        }
      }
      weights[site * dim + axis] = w;
    }
  }
  return ConductanceField(lat, cap, law, seed, std::move(weights));
}

ConductanceField threshold_indicator(const ConductanceField& field, double c) {
  if (!(c >= 0.0) || !(c <= field.cap()))
    throw std::invalid_argument("threshold outside [0, cap]");
  Eigen::VectorXd w(field.weights().size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = field.weights()[i] > c ? 1.0 : 0.0;
  FieldLaw law;
  law.kind = FieldLaw::Kind::Derived;
  law.note = "threshold(c=" + std::to_string(c) + ") of " + field.law().describe();
  return ConductanceField(field.lattice(), 1.0, std::move(law), field.seed(), std::move(w));
}

std::uint64_t field_checksum(const Eigen::VectorXd& weights) {
  std::uint64_t sum = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i)
    sum += std::bit_cast<std::uint64_t>(weights[i]);
  return sum;
}

namespace {

constexpr char kMagic[4] = {'P', 'C', 'H', 'M'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("field dump truncated");
  return v;
}

}  // namespace

void write_field(const ConductanceField& field, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, 4);
  put<std::uint16_t>(os, kVersion);
  put<std::uint16_t>(os, static_cast<std::uint16_t>(field.dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(field.side()));
  put<double>(os, field.cap());
  os.write(reinterpret_cast<const char*>(field.weights().data()),
           static_cast<std::streamsize>(field.weights().size() * sizeof(double)));
  put<std::uint64_t>(os, field_checksum(field.weights()));
  if (!os) throw std::runtime_error("write failed: " + path);
  os.close();

  nlohmann::json meta;
  meta["law"] = field.law().to_json();
  meta["seed"] = field.seed();
  meta["dim"] = field.dim();
  meta["side"] = field.side();
  meta["cap"] = field.cap();
  meta["checksum"] = field_checksum(field.weights());
  std::ofstream ms(path + ".json", std::ios::trunc);
  if (!ms) throw std::runtime_error("cannot open for writing: " + path + ".json");
  ms << meta.dump(2) << "\n";
}

ConductanceField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad magic in field dump: " + path);
  const auto version = get<std::uint16_t>(is);
  if (version != kVersion) throw std::runtime_error("unsupported field dump version");
  const int dim = get<std::uint16_t>(is);
  const int side = static_cast<int>(get<std::uint32_t>(is));
  const double cap = get<double>(is);

  TorusLattice lat(dim, side);
  Eigen::VectorXd weights(lat.n_bond_slots());
  is.read(reinterpret_cast<char*>(weights.data()),
          static_cast<std::streamsize>(weights.size() * sizeof(double)));
  if (!is) throw std::runtime_error("field dump truncated: " + path);
  const auto stored = get<std::uint64_t>(is);
  if (stored != field_checksum(weights))
    throw std::runtime_error("field dump checksum mismatch: " + path);

  FieldLaw law;
  law.kind = FieldLaw::Kind::Derived;
  law.note = "loaded from " + path;
  std::uint64_t seed = 0;
  std::ifstream ms(path + ".json");
  if (ms) {
    nlohmann::json meta = nlohmann::json::parse(ms);
    law = FieldLaw::from_json(meta.at("law"));
    seed = meta.at("seed").get<std::uint64_t>();
  }
  // The constructor re-validates 0 <= w <= cap.
  return ConductanceField(lat, cap, std::move(law), seed, std::move(weights));
}

}  // namespace pchm
