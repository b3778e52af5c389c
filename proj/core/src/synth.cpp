#include "mlran/synth.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

#include "mlran/digest.hpp"
#include "mlran/errors.hpp"
#include "mlran/parallel.hpp"
#include "mlran/rng.hpp"

namespace mlran {

using nlohmann::json;

namespace {

constexpr std::array<RansomwareType, 4> kTypes = {RansomwareType::Locker, RansomwareType::Crypto,
                                                   RansomwareType::Raas, RansomwareType::Modern};
constexpr std::size_t kFamiliesPerType = 2;

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Where a canonical name lives inside a report document.
struct Placement {
  enum class Kind { Api, Summary, Strings, Network, DropExtension, DropType, Signature } kind;
  std::string key;    // summary / network key
  std::string value;  // raw value
};

std::optional<Placement> placement_of(std::string_view name) {
  const auto group = group_of(name);
  if (!group) return std::nullopt;
  std::string_view rest = name.substr(group_prefix(*group).size());
  auto split_action = [&](std::initializer_list<std::string_view> actions) -> std::optional<std::string_view> {
    for (auto a : actions) {
      if (rest.size() > a.size() && rest.starts_with(a) && rest[a.size()] == ':') {
        const auto action = rest.substr(0, a.size());
        rest.remove_prefix(a.size() + 1);
        return action;
      }
    }
    return std::nullopt;
  };
  using K = Placement::Kind;
  switch (*group) {
    case FeatureGroup::Api:
      return Placement{K::Api, {}, std::string(rest)};
    case FeatureGroup::Registry:
      if (auto a = split_action({"OPENED", "DELETED", "READ", "WRITTEN"})) {
        return Placement{K::Summary, "regkey_" + lower(*a), std::string(rest)};
      }
      return std::nullopt;
    case FeatureGroup::File:
      if (auto a = split_action({"CREATED", "DELETED", "WRITTEN", "OPENED"})) {
        return Placement{K::Summary, "file_" + lower(*a), std::string(rest)};
      }
      return std::nullopt;
    case FeatureGroup::Directory:
      if (auto a = split_action({"CREATED", "ENUMERATED"})) {
        return Placement{K::Summary, "directory_" + lower(*a), std::string(rest)};
      }
      return std::nullopt;
    case FeatureGroup::String:
      return Placement{K::Strings, {}, std::string(rest)};
    case FeatureGroup::Network:
      if (auto a = split_action({"CONNECTS_IP", "CONNECTS_HOST", "RESOLVES_HOST"})) {
        return Placement{K::Network, lower(*a), std::string(rest)};
      }
      return std::nullopt;
    case FeatureGroup::System:
      if (auto a = split_action({"DLL_LOADED", "COMMAND_LINE", "MUTEX", "GUID"})) {
        return Placement{K::Summary, lower(*a), std::string(rest)};
      }
      return std::nullopt;
    case FeatureGroup::Dropped:
      if (auto a = split_action({"EXTENSION", "TYPE"})) {
        return Placement{*a == "EXTENSION" ? K::DropExtension : K::DropType, {}, std::string(rest)};
      }
      return std::nullopt;
    case FeatureGroup::Signature:
      return Placement{K::Signature, {}, std::string(rest)};
  }
  return std::nullopt;
}

void place(json& doc, const Placement& p) {
  using K = Placement::Kind;
  switch (p.kind) {
    case K::Api:
      doc["behavior"]["apistats"]["1000"][p.value] = 1;
      break;
    case K::Summary:
      doc["behavior"]["summary"][p.key].push_back(p.value);
      break;
    case K::Strings:
      doc["strings"].push_back(p.value);
      break;
    case K::Network:
      doc["network"][p.key].push_back(p.value);
      break;
    case K::DropExtension:
      doc["dropped"].push_back(json{{"extension", p.value}});
      break;
    case K::DropType:
      doc["dropped"].push_back(json{{"type", p.value}});
      break;
    case K::Signature:
      doc["signatures"].push_back(json{{"name", p.value}});
      break;
  }
}

Date draw_date(SplitMix64& rng, const DateRange& range) {
  using std::chrono::sys_days;
  const auto first = sys_days{range.first};
  const auto span = (sys_days{range.last} - first).count();
  return Date{first + std::chrono::days{static_cast<long>(rng.below(static_cast<std::uint64_t>(span) + 1))}};
}

}  // namespace

std::string synthetic_feature_name(FeatureGroup group, std::string_view tag) {
  const std::string t(tag);
  switch (group) {
    case FeatureGroup::Api: return "API:" + t;
    case FeatureGroup::Registry: return "REG:WRITTEN:HKEY_LOCAL_MACHINE\\SOFTWARE\\" + t;
    case FeatureGroup::File: return "FILE:CREATED:c:\\users\\public\\" + t + ".txt";
    case FeatureGroup::Directory: return "DIRECTORY:ENUMERATED:c:\\" + t + "\\*";
    case FeatureGroup::String: return "STRING:" + t;
    case FeatureGroup::Network: return "NETWORK:RESOLVES_HOST:" + t + ".example";
    case FeatureGroup::System: return "SYSTEM:MUTEX:" + t;
    case FeatureGroup::Dropped: return "DROP:EXTENSION:." + t;
    case FeatureGroup::Signature: return "SIGNATURE:" + t;
  }
  return {};
}

std::array<std::size_t, kFeatureGroupCount> spread_over_groups(std::size_t total) {
  std::array<std::size_t, kFeatureGroupCount> out{};
  for (std::size_t g = 0; g < kFeatureGroupCount; ++g) {
    out[g] = total / kFeatureGroupCount + (g < total % kFeatureGroupCount ? 1 : 0);
  }
  return out;
}

SynthSpec make_synth_spec(std::uint64_t seed, std::size_t n_goodware, std::size_t n_ransomware, std::size_t n_noise,
                          std::size_t n_planted, double hit_rate, double leak_rate, double background_rate) {
  SynthSpec spec;
  spec.seed = seed;
  spec.n_goodware = n_goodware;
  spec.n_ransomware = n_ransomware;
  spec.noise_per_group = spread_over_groups(n_noise);
  spec.background_rate = background_rate;
  for (std::size_t k = 0; k < n_planted; ++k) {
    const Label cls = k % 2 == 0 ? Label::Ransomware : Label::Goodware;
    const auto group = kAllFeatureGroups[k % kFeatureGroupCount];
    const std::string tag = "planted_" + std::string(to_string(cls)) + "_" + std::to_string(k);
    spec.planted.push_back({synthetic_feature_name(group, tag), cls, hit_rate, leak_rate});
  }
  return spec;
}

void validate(const SynthSpec& spec) {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(spec.background_rate)) throw InvalidArgument("background_rate must lie in [0, 1]");
  std::set<std::string> names;
  for (const auto& p : spec.planted) {
    if (!in_unit(p.hit_rate) || !in_unit(p.leak_rate)) throw InvalidArgument("planted rates must lie in [0, 1]");
    if (!(p.hit_rate > p.leak_rate)) throw InvalidArgument("planted '" + p.canonical + "': hit_rate must exceed leak_rate");
    if (!placement_of(p.canonical)) throw InvalidArgument("planted '" + p.canonical + "' has no report placement");
    if (!names.insert(p.canonical).second) throw InvalidArgument("duplicate planted feature '" + p.canonical + "'");
  }
  for (const auto& r : {spec.goodware_dates, spec.ransomware_dates}) {
    if (!r.first.ok() || !r.last.ok() || r.last < r.first) throw InvalidArgument("invalid date range");
  }
}

SynthCorpus generate_corpus(const SynthSpec& spec, unsigned threads) {
  validate(spec);

  std::vector<Placement> noise;
  for (FeatureGroup g : kAllFeatureGroups) {
    for (std::size_t k = 0; k < spec.noise_per_group[static_cast<std::size_t>(g)]; ++k) {
      const std::string tag = "noise_" + lower(group_label(g)) + "_" + std::to_string(k);
      noise.push_back(*placement_of(synthetic_feature_name(g, tag)));
    }
  }
  std::vector<Placement> planted;
  for (const auto& p : spec.planted) planted.push_back(*placement_of(p.canonical));

  const std::size_t n = spec.n_goodware + spec.n_ransomware;
  SynthCorpus corpus;
  corpus.reports.resize(n);
  corpus.metadata.resize(n);
  parallel_for(n, threads, [&](std::size_t i) {
    SplitMix64 rng(derive_seed(spec.seed, i));
    SampleMetadata meta;
    meta.sample_id = std::to_string(i + 1);
    meta.sha256 = sha256_hex("synthetic:" + std::to_string(spec.seed) + ":" + meta.sample_id);
    meta.source = "synthetic";
    if (i < spec.n_goodware) {
      meta.label = Label::Goodware;
      meta.first_submission = draw_date(rng, spec.goodware_dates);
    } else {
      const std::size_t r = i - spec.n_goodware;
      meta.label = Label::Ransomware;
      meta.ransomware_type = kTypes[r % kTypes.size()];
      meta.family = std::string(to_string(*meta.ransomware_type)) + "_family_" +
                    std::to_string((r / kTypes.size()) % kFamiliesPerType);
      meta.first_submission = draw_date(rng, spec.ransomware_dates);
    }

    json doc = json::object();
    for (std::size_t k = 0; k < planted.size(); ++k) {
      const auto& p = spec.planted[k];
      if (rng.bernoulli(p.cls == meta.label ? p.hit_rate : p.leak_rate)) place(doc, planted[k]);
    }
    for (const auto& p : noise) {
      if (rng.bernoulli(spec.background_rate)) place(doc, p);
    }
    corpus.reports[i] = {meta.sample_id, doc.dump() + "\n"};
    corpus.metadata[i] = std::move(meta);
  });
  return corpus;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  const auto reports_dir = dir / "reports";
  std::filesystem::create_directories(reports_dir);
  for (const auto& r : corpus.reports) {
    std::ofstream out(reports_dir / (r.sample_id + ".json"), std::ios::binary);
    out << r.document;
    if (!out) throw Error("cannot write report " + r.sample_id);
  }
  std::ofstream meta(dir / "metadata.csv", std::ios::binary);
  write_metadata(meta, corpus.metadata);
  if (!meta) throw Error("cannot write metadata.csv");
}

}  // namespace mlran
