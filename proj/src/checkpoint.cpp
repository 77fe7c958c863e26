#include "modnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "modnet/error.hpp"
#include "modnet/network.hpp"

namespace modnet {

namespace {

constexpr uint32_t kFormatVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ConfigError("container file truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ConfigError("container file truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_records(const std::string& path, const std::vector<Record>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  put_u32(os, kFormatVersion);
  put_u64(os, records.size());
  for (const auto& r : records) {
    put_u32(os, static_cast<uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(os, static_cast<uint32_t>(r.tensor.shape.size()));
    for (size_t e : r.tensor.shape) put_u64(os, e);
    for (double v : r.tensor.values) put_f64(os, v);
  }
  if (!os) throw ConfigError("write to '" + path + "' failed");
}

std::vector<Record> load_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  const uint32_t version = get_u32(is);
  if (version != kFormatVersion) {
    throw ConfigError("unsupported container version " + std::to_string(version) + " in '" + path +
                      "'");
  }
  const uint64_t count = get_u64(is);
  std::vector<Record> records;
  records.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    Record r;
    const uint32_t name_len = get_u32(is);
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    if (!is) throw ConfigError("container file truncated");
    const uint32_t rank = get_u32(is);
    std::vector<size_t> shape(rank);
    for (auto& e : shape) e = static_cast<size_t>(get_u64(is));
    r.tensor = Tensor(shape);
    for (auto& v : r.tensor.values) v = get_f64(is);
    records.push_back(std::move(r));
  }
  return records;
}

void save_checkpoint(const std::string& path, const Network& net) {
  std::vector<Record> records;
  records.reserve(net.params.size());
  for (const auto& p : net.params) {
    Record r;
    r.name = p.name;
    r.tensor = Tensor(p.t.shape, p.t.values);
    records.push_back(std::move(r));
  }
  save_records(path, records);
}

void load_checkpoint(const std::string& path, Network& net) {
  const auto records = load_records(path);
  for (auto& p : net.params) {
    const Record* found = nullptr;
    for (const auto& r : records) {
      if (r.name == p.name) {
        found = &r;
        break;
      }
    }
    if (!found) throw ConfigError("checkpoint '" + path + "' is missing parameter '" + p.name + "'");
    if (found->tensor.shape != p.t.shape) {
      throw ConfigError("checkpoint parameter '" + p.name + "' has shape " +
                        shape_str(found->tensor.shape) + ", expected " + shape_str(p.t.shape));
    }
    p.t.values = found->tensor.values;
  }
}

void save_dataset(const std::string& path, const Dataset& ds) {
  const auto& spec = ds.spec;
  const int T = spec.attribute_count;
  const int N = spec.sample_count;
  std::vector<Record> records;

  auto scalar = [](const std::string& name, double v) {
    return Record{name, Tensor({1}, {v})};
  };
  records.push_back(scalar("spec/attribute_count", T));
  records.push_back(scalar("spec/sample_count", N));
  records.push_back(scalar("spec/input_kind", spec.input_kind == InputKind::Image ? 1.0 : 0.0));
  records.push_back(scalar("spec/noise_sigma", spec.noise_sigma));
  records.push_back(scalar("spec/seed", static_cast<double>(spec.seed)));
  {
    Record dims{"spec/dims", Tensor({3})};
    if (spec.input_kind == InputKind::Image) {
      dims.tensor.values = {static_cast<double>(spec.height), static_cast<double>(spec.width), 1.0};
    } else {
      dims.tensor.values = {1.0, 1.0, static_cast<double>(spec.dim)};
    }
    records.push_back(std::move(dims));
  }
  {
    Record corr{"spec/correlation", Tensor({static_cast<size_t>(T), static_cast<size_t>(T)})};
    for (int i = 0; i < T; ++i) {
      for (int j = 0; j < T; ++j) corr.tensor.values[static_cast<size_t>(i) * T + j] = spec.correlation[i][j];
    }
    records.push_back(std::move(corr));
  }
  {
    Record labels{"labels", Tensor({static_cast<size_t>(N), static_cast<size_t>(T)})};
    for (int s = 0; s < N; ++s) {
      for (int t = 0; t < T; ++t) labels.tensor.values[static_cast<size_t>(s) * T + t] = ds.labels[s][t];
    }
    records.push_back(std::move(labels));
  }
  {
    const size_t per = ds.inputs.empty() ? 0 : ds.inputs[0].numel();
    Record inputs{"inputs", Tensor({static_cast<size_t>(N), per})};
    for (int s = 0; s < N; ++s) {
      std::copy(ds.inputs[s].values.begin(), ds.inputs[s].values.end(),
                inputs.tensor.values.begin() + static_cast<size_t>(s) * per);
    }
    records.push_back(std::move(inputs));
  }
  save_records(path, records);
}

Dataset load_dataset(const std::string& path) {
  const auto records = load_records(path);
  auto find = [&](const std::string& name) -> const Record& {
    for (const auto& r : records) {
      if (r.name == name) return r;
    }
    throw ConfigError("dataset file '" + path + "' is missing record '" + name + "'");
  };

  AttributeSpec spec;
  spec.attribute_count = static_cast<int>(find("spec/attribute_count").tensor.values.at(0));
  spec.sample_count = static_cast<int>(find("spec/sample_count").tensor.values.at(0));
  spec.input_kind = find("spec/input_kind").tensor.values.at(0) != 0.0 ? InputKind::Image
                                                                       : InputKind::Vector;
  spec.noise_sigma = find("spec/noise_sigma").tensor.values.at(0);
  spec.seed = static_cast<uint64_t>(find("spec/seed").tensor.values.at(0));
  const auto& dims = find("spec/dims").tensor.values;
  if (spec.input_kind == InputKind::Image) {
    spec.height = static_cast<int>(dims.at(0));
    spec.width = static_cast<int>(dims.at(1));
  } else {
    spec.dim = static_cast<int>(dims.at(2));
  }
  const int T = spec.attribute_count;
  const auto& corr = find("spec/correlation").tensor;
  if (corr.shape != std::vector<size_t>{static_cast<size_t>(T), static_cast<size_t>(T)}) {
    throw ConfigError("dataset correlation record has the wrong shape");
  }
  spec.correlation.assign(T, std::vector<double>(T, 0.0));
  for (int i = 0; i < T; ++i) {
    for (int j = 0; j < T; ++j) spec.correlation[i][j] = corr.values[static_cast<size_t>(i) * T + j];
  }
  spec.validate();

  Dataset ds;
  ds.spec = spec;
  const int N = spec.sample_count;
  const auto& labels = find("labels").tensor;
  if (labels.shape != std::vector<size_t>{static_cast<size_t>(N), static_cast<size_t>(T)}) {
    throw ConfigError("dataset label record has the wrong shape");
  }
  ds.labels.assign(N, std::vector<uint8_t>(T, 0));
  for (int s = 0; s < N; ++s) {
    for (int t = 0; t < T; ++t) {
      const double v = labels.values[static_cast<size_t>(s) * T + t];
      if (v != 0.0 && v != 1.0) throw ConfigError("dataset labels must be 0 or 1");
      ds.labels[s][t] = static_cast<uint8_t>(v);
    }
  }
  const auto& inputs = find("inputs").tensor;
  const size_t per = static_cast<size_t>(spec.input_dim());
  if (inputs.shape != std::vector<size_t>{static_cast<size_t>(N), per}) {
    throw ConfigError("dataset input record has the wrong shape");
  }
  ds.inputs.resize(N);
  for (int s = 0; s < N; ++s) {
    Tensor x = spec.input_kind == InputKind::Image
                   ? Tensor({static_cast<size_t>(spec.height), static_cast<size_t>(spec.width), 1})
                   : Tensor({per});
    std::copy(inputs.values.begin() + static_cast<size_t>(s) * per,
              inputs.values.begin() + static_cast<size_t>(s + 1) * per, x.values.begin());
    if (!x.finite()) throw ConfigError("dataset inputs contain non-finite values");
    ds.inputs[s] = std::move(x);
  }
  return ds;
}

}  // namespace modnet
