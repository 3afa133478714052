#include "loopperf/dataset_io.hpp"

#include <sstream>
#include <unordered_map>

#include "loopperf/errors.hpp"
#include "loopperf/featurize.hpp"
#include "loopperf/fileio.hpp"

namespace loopperf {

namespace {

template <class F>
void for_each_line(const std::string& text, F&& f) {
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw FormatError("line " + std::to_string(n) + ": " + e.what());
        }
        f(j, n);
    }
}

}  // namespace

std::string programs_to_jsonl(const std::vector<Program>& programs) {
    std::string out;
    for (const auto& p : programs) out += program_to_json(p).dump() + "\n";
    return out;
}

std::vector<Program> programs_from_jsonl(const std::string& text) {
    std::vector<Program> out;
    for_each_line(text, [&](const Json& j, std::size_t) { out.push_back(program_from_json(j)); });
    return out;
}

std::string samples_to_jsonl(const std::vector<Program>& programs, const std::vector<LabeledSample>& samples) {
    std::string out;
    for (const auto& s : samples)
        out += Json{{"program_id", programs.at(static_cast<std::size_t>(s.program)).id},
                    {"sequence", sequence_to_json(s.sequence)},
                    {"speedup", s.speedup}}
                   .dump() +
               "\n";
    return out;
}

std::vector<LabeledSample> samples_from_jsonl(const std::string& text, const std::vector<Program>& programs) {
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < programs.size(); ++i) index[programs[i].id] = static_cast<int>(i);
    std::vector<LabeledSample> out;
    for_each_line(text, [&](const Json& j, std::size_t n) {
        const auto id = j.at("program_id").get<std::string>();
        const auto it = index.find(id);
        if (it == index.end()) throw LookupError("line " + std::to_string(n) + ": unknown program '" + id + "'");
        out.push_back({it->second, sequence_from_json(j.at("sequence")), j.at("speedup").get<double>()});
    });
    return out;
}

std::string vectors_to_jsonl(const VectorDataset& d) {
    std::string out = Json{{"kind", "vectors"},
                           {"feature_config", feature_config_to_json(d.config)},
                           {"total_dim", d.vectors.rows()},
                           {"count", d.size()},
                           {"skipped", d.skipped}}
                          .dump() +
                      "\n";
    std::vector<double> v(static_cast<std::size_t>(d.vectors.rows()));
    for (std::size_t c = 0; c < d.size(); ++c) {
        Eigen::Map<Eigen::VectorXd>(v.data(), d.vectors.rows()) = d.vectors.col(static_cast<Eigen::Index>(c));
        out += Json{{"program_id", d.program_ids[c]},
                    {"statement_id", d.statement_ids[c]},
                    {"sequence", sequence_to_json(d.sequences[c])},
                    {"vector", v}}
                   .dump() +
               "\n";
    }
    return out;
}

VectorDataset vectors_from_jsonl(const std::string& text) {
    VectorDataset d;
    bool header = false;
    int dim = 0;
    std::size_t count = 0;
    for_each_line(text, [&](const Json& j, std::size_t n) {
        if (!header) {
            if (j.value("kind", "") != "vectors") throw FormatError("vector file: missing header line");
            d.config = feature_config_from_json(j.at("feature_config"));
            dim = j.at("total_dim").get<int>();
            if (dim != total_dim(d.config))
                throw FormatError("vector file: header total_dim " + std::to_string(dim) +
                                  " does not match its feature config (" + std::to_string(total_dim(d.config)) + ")");
            count = j.at("count").get<std::size_t>();
            d.skipped = j.at("skipped").get<std::size_t>();
            d.vectors.resize(dim, static_cast<Eigen::Index>(count));
            header = true;
            return;
        }
        const auto& v = j.at("vector");
        if (static_cast<int>(v.size()) != dim)
            throw FormatError("vector file line " + std::to_string(n) + ": length " + std::to_string(v.size()) +
                              ", total_dim " + std::to_string(dim));
        if (d.program_ids.size() >= count) throw FormatError("vector file: more records than the header count");
        const auto col = static_cast<Eigen::Index>(d.program_ids.size());
        for (int k = 0; k < dim; ++k) d.vectors(k, col) = v[static_cast<std::size_t>(k)].get<double>();
        d.program_ids.push_back(j.at("program_id").get<std::string>());
        d.statement_ids.push_back(j.at("statement_id").get<std::string>());
        d.sequences.push_back(sequence_from_json(j.at("sequence")));
    });
    if (!header) throw FormatError("vector file: empty");
    if (d.program_ids.size() != count)
        throw FormatError("vector file: header count " + std::to_string(count) + ", found " +
                          std::to_string(d.program_ids.size()));
    return d;
}

LabeledDataset load_labeled_dir(const std::filesystem::path& dir) {
    LabeledDataset d;
    d.programs = programs_from_jsonl(read_file(dir / DataDir::kPrograms));
    d.train = samples_from_jsonl(read_file(dir / DataDir::kTrain), d.programs);
    d.valid = samples_from_jsonl(read_file(dir / DataDir::kValid), d.programs);
    d.test = samples_from_jsonl(read_file(dir / DataDir::kTest), d.programs);
    return d;
}

}  // namespace loopperf
