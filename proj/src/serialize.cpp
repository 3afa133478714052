#include "loopperf/serialize.hpp"

#include "loopperf/errors.hpp"

namespace loopperf {

namespace {

Json matrix_to_json(const IntMatrix& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

IntMatrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw FormatError("access matrix must be a non-empty array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    IntMatrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("ragged access matrix");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = row[static_cast<std::size_t>(c)].get<std::int64_t>();
    }
    return m;
}

Json access_to_json(const AccessRelation& a) {
    return Json{{"buffer", a.buffer}, {"matrix", matrix_to_json(a.matrix)}};
}

AccessRelation access_from_json(const Json& j) {
    return {j.at("buffer").get<std::string>(), matrix_from_json(j.at("matrix"))};
}

Json expr_to_json(const Expr& e) {
    Json j{{"op", std::string(op_name(e.kind))}};
    if (e.kind == OpKind::LeafAccess) {
        j["read"] = e.read_index;
    } else if (e.kind == OpKind::LeafConst) {
        j["value"] = e.constant;
    } else {
        Json args = Json::array();
        for (const auto& c : e.children) args.push_back(expr_to_json(c));
        j["args"] = std::move(args);
    }
    return j;
}

Expr expr_from_json(const Json& j) {
    const OpKind k = op_from_name(j.at("op").get<std::string>());
    if (k == OpKind::LeafAccess) return Expr::access(j.at("read").get<int>());
    if (k == OpKind::LeafConst) return Expr::constant_leaf(j.at("value").get<double>());
    const auto& args = j.at("args");
    if (args.size() != 2) throw FormatError("binary op needs 2 args");
    return Expr::binary(k, expr_from_json(args[0]), expr_from_json(args[1]));
}

Json loop_to_json(const LoopNode& loop) {
    Json body = Json::array();
    for (const auto& item : loop.body) {
        if (item.is_loop()) {
            body.push_back(loop_to_json(item.loop()));
            continue;
        }
        const auto& s = item.statement();
        Json reads = Json::array();
        for (const auto& r : s.reads) reads.push_back(access_to_json(r));
        body.push_back(Json{{"id", s.id},
                            {"write", access_to_json(s.write)},
                            {"reads", std::move(reads)},
                            {"expr", expr_to_json(s.expr)}});
    }
    return Json{{"iter", loop.iterator}, {"lo", loop.lower}, {"hi", loop.upper}, {"body", body}};
}

LoopNode loop_from_json(const Json& j) {
    LoopNode loop;
    loop.iterator = j.at("iter").get<std::string>();
    loop.lower = j.at("lo").get<std::int64_t>();
    loop.upper = j.at("hi").get<std::int64_t>();
    for (const auto& item : j.at("body")) {
        if (item.contains("iter")) {
            loop.body.push_back({loop_from_json(item)});
            continue;
        }
        Statement s;
        s.id = item.at("id").get<std::string>();
        s.write = access_from_json(item.at("write"));
        for (const auto& r : item.at("reads")) s.reads.push_back(access_from_json(r));
        s.expr = expr_from_json(item.at("expr"));
        loop.body.push_back({std::move(s)});
    }
    return loop;
}

}  // namespace

Json program_to_json(const Program& p) {
    Json buffers = Json::array();
    for (const auto& b : p.buffers) buffers.push_back(Json{{"name", b.name}, {"dims", b.extents}});
    Json loops = Json::array();
    for (const auto& l : p.root_loops) loops.push_back(loop_to_json(l));
    return Json{{"id", p.id}, {"buffers", std::move(buffers)}, {"loops", std::move(loops)}};
}

Program program_from_json(const Json& j) {
    try {
        Program p;
        p.id = j.at("id").get<std::string>();
        for (const auto& b : j.at("buffers"))
            p.buffers.push_back({b.at("name").get<std::string>(),
                                 b.at("dims").get<std::vector<std::int64_t>>()});
        for (const auto& l : j.at("loops")) p.root_loops.push_back(loop_from_json(l));
        return p;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("program json: ") + e.what());
    }
}

Json transformation_to_json(const Transformation& t) {
    if (const auto* x = std::get_if<Interchange>(&t))
        return Json{{"kind", "Interchange"}, {"a", x->a}, {"b", x->b}};
    if (const auto* x = std::get_if<Reversal>(&t))
        return Json{{"kind", "Reversal"}, {"level", x->level}};
    if (const auto* x = std::get_if<Skewing>(&t))
        return Json{{"kind", "Skewing"}, {"a", x->a}, {"b", x->b}, {"fa", x->factor_a},
                    {"fb", x->factor_b}};
    if (const auto* x = std::get_if<Parallelize>(&t))
        return Json{{"kind", "Parallelize"}, {"level", x->level}};
    if (const auto* x = std::get_if<Tile>(&t))
        return Json{{"kind", "Tile"}, {"a", x->a}, {"b", x->b}, {"sa", x->size_a},
                    {"sb", x->size_b}};
    const auto& u = std::get<Unroll>(t);
    return Json{{"kind", "Unroll"}, {"level", u.level}, {"factor", u.factor}};
}

Transformation transformation_from_json(const Json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "Interchange") return Interchange{j.at("a").get<int>(), j.at("b").get<int>()};
        if (kind == "Reversal") return Reversal{j.at("level").get<int>()};
        if (kind == "Skewing")
            return Skewing{j.at("a").get<int>(), j.at("b").get<int>(),
                           j.at("fa").get<std::int64_t>(), j.at("fb").get<std::int64_t>()};
        if (kind == "Parallelize") return Parallelize{j.at("level").get<int>()};
        if (kind == "Tile")
            return Tile{j.at("a").get<int>(), j.at("b").get<int>(), j.at("sa").get<int>(),
                        j.at("sb").get<int>()};
        if (kind == "Unroll") return Unroll{j.at("level").get<int>(), j.at("factor").get<int>()};
        throw FormatError("unknown transformation kind '" + kind + "'");
    } catch (const Json::exception& e) {
        throw FormatError(std::string("transformation json: ") + e.what());
    }
}

Json sequence_to_json(const TransformationSequence& s) {
    Json out = Json::array();
    for (const auto& t : s) out.push_back(transformation_to_json(t));
    return out;
}

TransformationSequence sequence_from_json(const Json& j) {
    if (!j.is_array()) throw FormatError("sequence must be an array");
    TransformationSequence s;
    for (const auto& t : j) s.push_back(transformation_from_json(t));
    return s;
}

std::string sequence_key(const TransformationSequence& s) { return sequence_to_json(s).dump(); }

Json feature_config_to_json(const FeatureConfig& c) {
    return Json{{"max_depth", c.max_depth},
                {"max_accesses", c.max_accesses},
                {"max_ops", c.max_ops},
                {"max_xforms", c.max_xforms},
                {"op_kinds", c.op_kinds},
                {"access_rows", c.access_rows},
                {"pad_value", c.pad_value},
                {"bound_scale", c.bound_scale},
                {"log_trip_scale", c.log_trip_scale},
                {"matrix_scale", c.matrix_scale},
                {"tile_scale", c.tile_scale},
                {"unroll_log_scale", c.unroll_log_scale}};
}

FeatureConfig feature_config_from_json(const Json& j) {
    try {
        FeatureConfig c;
        c.max_depth = j.at("max_depth").get<int>();
        c.max_accesses = j.at("max_accesses").get<int>();
        c.max_ops = j.at("max_ops").get<int>();
        c.max_xforms = j.at("max_xforms").get<int>();
        c.op_kinds = j.at("op_kinds").get<int>();
        c.access_rows = j.at("access_rows").get<int>();
        c.pad_value = j.at("pad_value").get<double>();
        c.bound_scale = j.at("bound_scale").get<double>();
        c.log_trip_scale = j.at("log_trip_scale").get<double>();
        c.matrix_scale = j.at("matrix_scale").get<double>();
        c.tile_scale = j.at("tile_scale").get<double>();
        c.unroll_log_scale = j.at("unroll_log_scale").get<double>();
        c.check();
        return c;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("feature config json: ") + e.what());
    }
}

}  // namespace loopperf
