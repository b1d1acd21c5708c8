#include "pfesta/model/params.hpp"

#include <fstream>
#include <iterator>

#include "pfesta/engine/byte_io.hpp"

namespace pfesta::model {

std::size_t element_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor(t.shape()));
  return out;
}

bool same_layout(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) return false;
  }
  return true;
}

ParamSet average(const std::vector<const ParamSet*>& sets) {
  if (sets.empty()) throw ContractError("average() needs at least one parameter set");
  for (const auto* s : sets) {
    if (!same_layout(*s, *sets.front())) throw ContractError("cannot average heterogeneous parameter sets");
  }
  // Accumulate in double so that averaging identical sets returns them bit for bit.
  ParamSet out = zeros_like(*sets.front());
  const double n = static_cast<double>(sets.size());
  for (auto& [name, t] : out) {
    std::vector<double> acc(t.size(), 0.0);
    for (const auto* s : sets) {
      const auto src = s->at(name).data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) t[i] = static_cast<float>(acc[i] / n);
  }
  return out;
}

void axpy(ParamSet& dst, float alpha, const ParamSet& src) {
  for (const auto& [name, g] : src) {
    auto it = dst.find(name);
    if (it == dst.end()) throw ContractError("axpy: unknown parameter '" + name + "'");
    axpy_inplace(it->second, alpha, g);
  }
}

std::vector<Tensor> to_tensor_list(const ParamSet& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

void assign_from_tensor_list(ParamSet& params, const std::vector<Tensor>& tensors) {
  if (tensors.size() != params.size()) {
    throw ContractError("parameter payload has " + std::to_string(tensors.size()) + " tensors, expected " +
                        std::to_string(params.size()));
  }
  std::size_t i = 0;
  for (auto& [name, t] : params) {
    if (tensors[i].shape() != t.shape()) {
      throw DimensionError("parameter '" + name + "' shape " + shape_string(t.shape()) + " vs payload " +
                           shape_string(tensors[i].shape()));
    }
    t = tensors[i++];
  }
}

void write_checkpoint(std::ostream& out, const ParamSet& params) {
  std::vector<std::uint8_t> buf;
  for (const auto& [name, t] : params) {
    buf.clear();
    bytes::put_le(buf, static_cast<std::uint32_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    bytes::put_le(buf, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) bytes::put_le(buf, static_cast<std::uint32_t>(d));
    for (float v : t.data()) bytes::put_f32(buf, v);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
}

ParamSet read_checkpoint(std::istream& in) {
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bytes::Reader r(data);
  ParamSet out;
  while (r.remaining() > 0) {
    const auto name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw bytes::DecodeError("checkpoint entry '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    std::vector<float> values(shape_size(shape));
    for (auto& v : values) v = r.get_f32();
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw bytes::DecodeError("duplicate checkpoint entry '" + name + "'");
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, params);
}

ParamSet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace pfesta::model
