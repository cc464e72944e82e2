#pragma once

// Command-line front end: ingest, describe, aggregate, session export and
// validate, serve. Exit codes: 0 success, 1 data error, 2 usage error.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <sstream>

#include "spot/engine.hpp"
#include "spot/ingest.hpp"
#include "spot/json_io.hpp"
#include "spot/server.hpp"
#include "spot/session.hpp"

namespace spot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

/// Bad flag grammar; reported as a usage error.
class SpecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline double spec_number(const std::string& text, const std::string& spec) {
  if (auto n = parse_number(text)) return *n;
  if (auto t = parse_timestamp(text)) return static_cast<double>(t->ms);
  throw SpecError("'" + text + "' in '" + spec + "' is not a number or timestamp");
}

}  // namespace detail

/// name=kind pairs from repeated --kind flags.
inline std::map<std::string, FacetKind> parse_kind_overrides(const std::vector<std::string>& specs) {
  std::map<std::string, FacetKind> out;
  for (const auto& s : specs) {
    const auto eq = s.rfind('=');
    if (eq == std::string::npos || eq == 0) throw SpecError("--kind expects name=kind, got '" + s + "'");
    auto kind = facet_kind_from_string(s.substr(eq + 1));
    if (!kind) throw SpecError("unknown kind '" + s.substr(eq + 1) + "'");
    out[s.substr(0, eq)] = *kind;
  }
  return out;
}

/// "facet" (defaults from stats), "facet:lo:hi:bins", or "facet:interval".
inline PartitionSpec parse_partition(const std::string& spec, Backend& backend) {
  const auto& desc = backend.descriptor();
  if (const Facet* f = desc.find_facet(spec)) return default_partition(*f, backend.scan_stats(f->name));
  const auto parts = detail::split(spec, ':');
  if (parts.size() >= 4) {
    std::string facet = parts[0];
    for (std::size_t i = 1; i + 3 < parts.size(); ++i) facet += ":" + parts[i];
    const auto n = parts.size();
    auto lo = parse_number(parts[n - 3]);
    auto hi = parse_number(parts[n - 2]);
    auto bins = parse_number(parts[n - 1]);
    if (!lo || !hi || !bins || *bins != std::floor(*bins)) throw SpecError("partition '" + spec + "' expects facet:lo:hi:bins");
    return PartitionSpec{facet, ContinuousBins{*lo, *hi, static_cast<int>(*bins)}};
  }
  const auto colon = spec.rfind(':');
  if (colon != std::string::npos) {
    if (auto interval = time_interval_from_string(spec.substr(colon + 1)))
      return PartitionSpec{spec.substr(0, colon), DatetimeGrouping{*interval}};
  }
  throw Error(ErrorCode::NotFound, "unknown facet or partition '" + spec + "'");
}

/// "count" or "op:facet".
inline AggregateSpec parse_aggregate(const std::string& spec) {
  if (spec == "count") return {AggregateOp::count, std::nullopt};
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw SpecError("aggregate '" + spec + "' expects count or op:facet");
  auto op = aggregate_op_from_string(spec.substr(0, colon));
  if (!op) throw SpecError("unknown aggregate '" + spec.substr(0, colon) + "'");
  return {*op, spec.substr(colon + 1)};
}

struct SelectSpec {
  std::string facet;
  Selection selection;
};

/// "facet:[lo,hi)" or "facet:{a,b}".
inline SelectSpec parse_select(const std::string& spec) {
  auto range = spec.rfind(":[");
  auto set = spec.rfind(":{");
  if (range != std::string::npos && spec.back() == ')') {
    auto bounds = detail::split(spec.substr(range + 2, spec.size() - range - 3), ',');
    if (bounds.size() != 2) throw SpecError("selection '" + spec + "' expects facet:[lo,hi)");
    RangeSelection r{detail::spec_number(std::string(spot::detail::trim(bounds[0])), spec), detail::spec_number(std::string(spot::detail::trim(bounds[1])), spec)};
    return {spec.substr(0, range), r};
  }
  if (set != std::string::npos && spec.back() == '}') {
    CategorySelection c;
    for (const auto& label : detail::split(spec.substr(set + 2, spec.size() - set - 3), ',')) c.labels.insert(label);
    return {spec.substr(0, set), c};
  }
  throw SpecError("selection '" + spec + "' expects facet:[lo,hi) or facet:{a,b}");
}

inline AggregateRequest build_request(Backend& backend, const std::vector<std::string>& partitions,
                                      const std::vector<std::string>& aggregates, const std::vector<std::string>& selects) {
  AggregateRequest req;
  for (const auto& p : partitions) req.partitions.push_back(parse_partition(p, backend));
  for (const auto& a : aggregates) req.aggregates.push_back(parse_aggregate(a));
  if (req.aggregates.empty()) req.aggregates.push_back({AggregateOp::count, std::nullopt});
  for (const auto& s : selects) {
    auto sel = parse_select(s);
    const auto& facet = backend.descriptor().facet(sel.facet);
    PartitionSpec on{facet.name, CategoryGrouping{}};
    auto same = std::find_if(req.partitions.begin(), req.partitions.end(), [&](const auto& p) { return p.facet == facet.name; });
    if (same != req.partitions.end())
      on = *same;
    else
      on = default_partition(facet, backend.scan_stats(facet.name));
    req.predicate.push_back({std::move(on), std::move(sel.selection)});
  }
  validate_request(backend.descriptor(), req);
  return req;
}

inline std::string key_text(const GroupKey& k) {
  if (const auto* b = std::get_if<BinKey>(&k)) return b->label;
  if (const auto* c = std::get_if<CategoryKey>(&k)) return c->label;
  return format_timestamp(std::get<TimeKey>(k).start);
}

inline std::string aggregate_name(const AggregateSpec& a) {
  return a.facet ? std::string(to_string(a.op)) + "(" + *a.facet + ")" : std::string(to_string(a.op));
}

/// Header row, then one line per group; empty cells for absent values.
inline std::string format_rows_csv(const AggregateRequest& req, const std::vector<GroupRow>& rows) {
  std::string out;
  auto cell = [&](const std::string& s, bool first) {
    if (!first) out += ',';
    out += spot::detail::csv_escape(s, ',');
  };
  for (std::size_t i = 0; i < req.partitions.size(); ++i) cell(req.partitions[i].facet, i == 0);
  cell("rows", false);
  for (const auto& a : req.aggregates) cell(aggregate_name(a), false);
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.keys.size(); ++i) cell(key_text(r.keys[i]), i == 0);
    cell(std::to_string(r.count), false);
    for (const auto& v : r.values) cell(v ? format_number(*v) : "", false);
    out += '\n';
  }
  return out;
}

inline std::string format_rows_json(const std::vector<GroupRow>& rows) { return canonical_dump(to_json(rows)); }

struct FileOptions {
  std::string path;
  std::vector<std::string> kinds;
  std::string delimiter = ",";
};

inline char delimiter_of(const std::string& d) {
  if (d == ",") return ',';
  if (d == ";") return ';';
  if (d == "\\t" || d == "\t" || d == "tab") return '\t';
  throw SpecError("delimiter must be ',', ';' or tab");
}

inline LoadResult load_file(const FileOptions& f) {
  const auto bytes = read_file(f.path);
  const bool json = std::filesystem::path(f.path).extension() == ".json" || sniff_format(bytes) == InputFormat::json;
  auto table = parse_input(bytes, json ? InputFormat::json : InputFormat::csv, CsvDialect{delimiter_of(f.delimiter)});
  const auto stem = std::filesystem::path(f.path).stem().string();
  return load_dataset(table, parse_kind_overrides(f.kinds), LoadOptions{stem, stem, "", {}});
}

/// "ID=PART[;PART]|AGG[;AGG]" with an optional "@chart-kind" suffix.
inline Filter parse_filter(const std::string& spec, Backend& backend) {
  std::string body = spec;
  std::string chart = "histogram-vertical";
  if (auto at = body.rfind('@'); at != std::string::npos) {
    chart = body.substr(at + 1);
    body = body.substr(0, at);
  }
  const auto eq = body.find('=');
  if (eq == std::string::npos || eq == 0) throw SpecError("filter '" + spec + "' expects ID=PARTITIONS|AGGREGATES");
  Filter f;
  f.id = body.substr(0, eq);
  f.chart_kind = chart;
  auto rest = body.substr(eq + 1);
  const auto bar = rest.find('|');
  for (const auto& p : detail::split(rest.substr(0, bar), ';'))
    if (!p.empty()) f.partitions.push_back(parse_partition(p, backend));
  if (bar != std::string::npos)
    for (const auto& a : detail::split(rest.substr(bar + 1), ';'))
      if (!a.empty()) f.aggregates.push_back(parse_aggregate(a));
  if (f.aggregates.empty()) f.aggregates.push_back({AggregateOp::count, std::nullopt});
  return f;
}

/// "ID=facet:[lo,hi)" or "ID=facet:{a,b}"; placed on the filter's partition over that facet.
inline void apply_filter_selection(std::vector<Filter>& filters, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw SpecError("selection '" + spec + "' expects ID=facet:[lo,hi)");
  const auto id = spec.substr(0, eq);
  auto it = std::find_if(filters.begin(), filters.end(), [&](const Filter& f) { return f.id == id; });
  if (it == filters.end()) throw Error(ErrorCode::NotFound, "selection names unknown filter '" + id + "'");
  auto sel = parse_select(spec.substr(eq + 1));
  for (std::size_t i = 0; i < it->partitions.size(); ++i) {
    if (it->partitions[i].facet != sel.facet) continue;
    it->selection.resize(it->partitions.size());
    it->selection[i] = std::move(sel.selection);
    return;
  }
  throw Error(ErrorCode::NotFound, "filter '" + id + "' has no partition over '" + sel.facet + "'");
}

namespace detail {

inline std::atomic<bool> g_interrupted{false};

inline void on_signal(int) { g_interrupted = true; }

}  // namespace detail

/// Parses and runs one invocation.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"spot: faceted aggregation and linked data views over tabular data", "spot"};
  app.require_subcommand(1);

  FileOptions file;
  auto add_file_options = [&](CLI::App* cmd) {
    cmd->add_option("file", file.path, "CSV or JSON records file")->required();
    cmd->add_option("--kind", file.kinds, "Force a facet kind: name=continuous|categorical|datetime|text");
    cmd->add_option("--delimiter", file.delimiter, "CSV delimiter: ',' ';' or tab");
  };
  std::string format = "csv";

  auto* ingest = app.add_subcommand("ingest", "Print the facets detected in a file");
  add_file_options(ingest);
  ingest->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  std::string facet;
  auto* describe = app.add_subcommand("describe", "Print statistics of one facet as JSON");
  add_file_options(describe);
  describe->add_option("facet", facet, "Facet name")->required();

  std::vector<std::string> partitions, aggregates, selects;
  auto* aggregate = app.add_subcommand("aggregate", "Group and aggregate a file");
  add_file_options(aggregate);
  aggregate->add_option("--partition", partitions, "facet | facet:lo:hi:bins | facet:minute|hour|day|month|year")->required();
  aggregate->add_option("--agg", aggregates, "count | sum|avg|min|max|stddev:facet (default count)");
  aggregate->add_option("--select", selects, "facet:[lo,hi) | facet:{a,b}");
  aggregate->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  aggregate->footer(
      "Partitions without bounds use 20 bins over the observed range.\n"
      "Range selections are half-open; datetime bounds may be ISO-8601 timestamps.");

  auto* session = app.add_subcommand("session", "Build or check session documents");
  session->require_subcommand(1);
  std::vector<std::string> filter_specs, filter_selects;
  std::string output;
  bool include_self = false;
  auto* export_cmd = session->add_subcommand("export", "Compute a view over a file and write its session document");
  add_file_options(export_cmd);
  export_cmd->add_option("--filter", filter_specs, "ID=PART[;PART]|AGG[;AGG][@chart-kind]")->required();
  export_cmd->add_option("--select", filter_selects, "ID=facet:[lo,hi) | ID=facet:{a,b}");
  export_cmd->add_option("-o,--output", output, "Write to this path instead of stdout");
  export_cmd->add_flag("--include-self", include_self, "Apply each filter's selection to itself");
  std::string document;
  auto* validate = session->add_subcommand("validate", "Check a session document");
  validate->add_option("document", document, "Session file")->required();

  std::string config_path = "./spot-config.json";
  std::string listen;
  std::size_t pool_size = 0;
  auto* serve = app.add_subcommand("serve", "Run the HTTP server");
  serve->add_option("--config", config_path, "Server config file")->capture_default_str();
  serve->add_option("--listen", listen, "host:port, overrides the config");
  serve->add_option("--pool-size", pool_size, "Database connections, overrides the config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*ingest) {
      auto loaded = load_file(file);
      for (const auto& w : loaded.warnings) err << "warning: " << to_string(w.code) << ": " << w.subject << ": " << w.message << "\n";
      const auto& facets = loaded.dataset->facets();
      if (format == "json") {
        Json list = Json::array();
        for (std::size_t i = 0; i < facets.size(); ++i) {
          Json j = to_json(facets[i]);
          j["confidence"] = loaded.guesses[i].confidence;
          j["parseFailures"] = loaded.guesses[i].parse_failures;
          list.push_back(std::move(j));
        }
        out << canonical_dump(Json{{"rows", loaded.dataset->row_count()}, {"facets", std::move(list)}});
      } else {
        out << "facet,kind,confidence,parse_failures\n";
        for (std::size_t i = 0; i < facets.size(); ++i)
          out << spot::detail::csv_escape(facets[i].name, ',') << ',' << to_string(facets[i].kind) << ','
              << format_number(loaded.guesses[i].confidence) << ',' << loaded.guesses[i].parse_failures << '\n';
      }
    } else if (*describe) {
      auto loaded = load_file(file);
      const auto& f = loaded.dataset->descriptor().facet(facet);
      out << canonical_dump(Json{{"facet", f.name}, {"kind", std::string(to_string(f.kind))}, {"rows", loaded.dataset->row_count()},
                                 {"stats", to_json(facet_stats(*loaded.dataset, facet))}});
    } else if (*aggregate) {
      MemoryBackend backend(load_file(file).dataset);
      auto req = build_request(backend, partitions, aggregates, selects);
      auto rows = backend.aggregate(req);
      out << (format == "json" ? format_rows_json(rows) : format_rows_csv(req, rows));
    } else if (*export_cmd) {
      auto backend = std::make_shared<MemoryBackend>(load_file(file).dataset);
      std::vector<Filter> filters;
      for (const auto& s : filter_specs) filters.push_back(parse_filter(s, *backend));
      for (const auto& s : filter_selects) apply_filter_selection(filters, s);
      ViewOptions options;
      options.include_self = include_self;
      DataView view(backend, options);
      view.replace_filters(std::move(filters)).collect();
      view.wait_idle();
      const auto doc = save_session(view);
      if (output.empty()) {
        out << doc;
      } else {
        std::ofstream f(output, std::ios::binary);
        if (!(f << doc)) throw Error(ErrorCode::NotFound, "cannot write " + output);
      }
    } else if (*validate) {
      auto s = load_session(read_file(document));
      for (const auto& w : session_warnings(s)) err << "warning: " << to_string(w.code) << ": " << w.message << "\n";
      out << "valid: " << s.charts.size() << " chart(s), revision " << s.revision << "\n";
    } else if (*serve) {
      auto config = server::load_config(config_path);
      if (!listen.empty()) {
        server::parse_listen(listen);
        config.listen = listen;
      }
      if (pool_size) config.pool_size = pool_size;
      server::Server srv(config);
      for (const auto& d : srv.datasets())
        if (!d->ready()) err << "warning: dataset '" << d->id << "' is degraded: " << d->degraded.value_or("") << "\n";
      srv.start();
      err << "listening on " << config.listen.substr(0, config.listen.rfind(':')) << ":" << srv.port() << "\n";
      detail::g_interrupted = false;
      std::signal(SIGINT, detail::on_signal);
      std::signal(SIGTERM, detail::on_signal);
      while (!detail::g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      srv.stop();
    }
  } catch (const SpecError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"spot"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace spot::cli
