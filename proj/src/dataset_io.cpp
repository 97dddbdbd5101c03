#include <bit>
#include <cstring>
#include <fstream>
#include <optional>

#include "egal/dataset.hpp"
#include "json.hpp"

namespace egal {

namespace {

using nlohmann::json;

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw DatasetError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  return out;
}

std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& at) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DatasetError(at + ": field '" + key + "' must be a string or null");
  return it->get<std::string>();
}

std::vector<double> vector_field(const json& obj, const std::string& at) {
  auto it = obj.find("vec");
  if (it == obj.end() || !it->is_array()) throw DatasetError(at + ": missing 'vec' array");
  std::vector<double> v;
  v.reserve(it->size());
  for (const auto& x : *it) {
    if (!x.is_number()) throw DatasetError(at + ": 'vec' entries must be numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

template <class F>
void for_each_json_line(const std::filesystem::path& path, F&& on_object) {
  auto in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line.front() == '#') continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DatasetError(where(path, lineno) + ": malformed line: " + e.what());
    }
    if (!obj.is_object()) throw DatasetError(where(path, lineno) + ": malformed line: expected an object");
    on_object(obj, where(path, lineno));
  }
}

json optional_json(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

// Binary helpers. Integers are little-endian on disk regardless of host order.
template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

template <class T>
T get_le(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof bytes)) throw DatasetError(path.string() + ": truncated file");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::filesystem::path& path) {
  const auto len = get_le<std::uint32_t>(in, path);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) throw DatasetError(path.string() + ": truncated file");
  return s;
}

constexpr char kMagic[6] = {'E', 'G', 'A', 'L', 'V', '1'};

std::size_t infer_dim(const std::vector<ExampleRecord>& pool, const std::vector<Exemplar>& exemplars) {
  if (!pool.empty()) return pool.front().vec.size();
  if (!exemplars.empty()) return exemplars.front().vec.size();
  throw DatasetError("empty dataset: no pool records and no exemplars");
}

}  // namespace

std::vector<ExampleRecord> read_pool_jsonl(const std::filesystem::path& path) {
  std::vector<ExampleRecord> out;
  for_each_json_line(path, [&](const json& obj, const std::string& at) {
    auto id = obj.find("id");
    if (id == obj.end() || !id->is_string()) throw DatasetError(at + ": missing string 'id'");
    out.push_back({id->get<std::string>(), vector_field(obj, at), optional_string(obj, "label", at),
                   optional_string(obj, "text", at)});
  });
  return out;
}

std::vector<Exemplar> read_exemplars_jsonl(const std::filesystem::path& path) {
  std::vector<Exemplar> out;
  for_each_json_line(path, [&](const json& obj, const std::string& at) {
    auto cls = obj.find("class");
    if (cls == obj.end() || !cls->is_string()) throw DatasetError(at + ": missing string 'class'");
    auto vec = obj.find("vec");
    if (vec == obj.end() || vec->is_null() || (vec->is_array() && vec->empty())) {
      throw DatasetError(at + ": exemplar class '" + cls->get<std::string>() + "' is missing a vector");
    }
    out.push_back({cls->get<std::string>(), vector_field(obj, at), optional_string(obj, "text", at)});
  });
  return out;
}

std::vector<ExampleRecord> read_pool_binary(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DatasetError(path.string() + ": bad magic, expected EGALV1");
  }
  const auto n = get_le<std::uint32_t>(in, path);
  const auto d = get_le<std::uint32_t>(in, path);
  std::vector<ExampleRecord> out;
  out.reserve(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    ExampleRecord rec;
    rec.id = get_string(in, path);
    rec.vec.resize(d);
    for (auto& x : rec.vec) x = std::bit_cast<float>(get_le<std::uint32_t>(in, path));
    if (auto label = get_string(in, path); !label.empty()) rec.label = std::move(label);
    if (auto text = get_string(in, path); !text.empty()) rec.text = std::move(text);
    out.push_back(std::move(rec));
  }
  return out;
}

void write_pool_binary(const std::filesystem::path& path, std::span<const ExampleRecord> records) {
  const std::uint32_t d = records.empty() ? 0 : static_cast<std::uint32_t>(records.front().vec.size());
  auto out = open_out(path, std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  put_le<std::uint32_t>(out, d);
  for (const auto& rec : records) {
    if (rec.vec.size() != d) throw DatasetError("dimension mismatch for example '" + rec.id + "'");
    put_string(out, rec.id);
    for (double x : rec.vec) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    put_string(out, rec.label.value_or(""));
    put_string(out, rec.text.value_or(""));
  }
}

std::vector<ExampleRecord> read_pool(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[sizeof kMagic] = {};
  in.read(magic, sizeof magic);
  if (in.gcount() == sizeof magic && std::memcmp(magic, kMagic, sizeof kMagic) == 0) return read_pool_binary(path);
  return read_pool_jsonl(path);
}

void write_pool_jsonl(const std::filesystem::path& path, std::span<const ExampleRecord> records,
                      std::string_view header) {
  auto out = open_out(path);
  if (!header.empty()) out << "# " << header << '\n';
  for (const auto& rec : records) {
    json obj = {{"id", rec.id}, {"vec", rec.vec}, {"label", optional_json(rec.label)}, {"text", optional_json(rec.text)}};
    out << obj.dump() << '\n';
  }
}

void write_exemplars_jsonl(const std::filesystem::path& path, std::span<const Exemplar> exemplars,
                           std::string_view header) {
  auto out = open_out(path);
  if (!header.empty()) out << "# " << header << '\n';
  for (const auto& e : exemplars) {
    json obj = {{"class", e.class_id}, {"vec", e.vec}, {"text", optional_json(e.text)}};
    out << obj.dump() << '\n';
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& pool_path,
                   const std::filesystem::path& exemplar_path) {
  std::vector<ExampleRecord> records;
  records.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) records.push_back(ds.record(i));
  write_pool_jsonl(pool_path, records);
  write_exemplars_jsonl(exemplar_path, ds.exemplars());
}

Dataset load_dataset(const std::filesystem::path& pool_path, const std::filesystem::path& exemplar_path) {
  auto pool = read_pool(pool_path);
  auto exemplars = read_exemplars_jsonl(exemplar_path);
  const std::size_t dim = infer_dim(pool, exemplars);
  return Dataset(dim, std::move(pool), std::move(exemplars));
}

}  // namespace egal
