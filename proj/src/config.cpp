#include "gmpvba/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gmpvba/io.hpp"

namespace gmpvba {

namespace pt = boost::property_tree;

namespace {

std::string trimmed(std::string s)
{
    boost::algorithm::trim(s);
    return s;
}

double parse_double(const std::string& key, const std::string& text)
{
    const std::string t = trimmed(text);
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used == t.size())
            return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': '" + text + "' is not a number");
}

long long parse_integer(const std::string& key, const std::string& text)
{
    const std::string t = trimmed(text);
    try {
        std::size_t used = 0;
        const long long v = std::stoll(t, &used);
        if (used == t.size())
            return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': '" + text + "' is not an integer");
}

std::vector<double> parse_list(const std::string& key, const std::string& text)
{
    std::vector<std::string> parts;
    boost::algorithm::split(parts, text, boost::is_any_of(","));
    std::vector<double> out;
    for (const auto& p : parts)
        if (!trimmed(p).empty())
            out.push_back(parse_double(key, p));
    return out;
}

std::string join(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + format_double(v[i]);
    return s;
}

class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    std::optional<std::string> raw(const std::string& key) const
    {
        if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.')))
            return trimmed(*v);
        return std::nullopt;
    }

    bool has_section(const std::string& name) const { return tree_.find(name) != tree_.not_found(); }

    double number(const std::string& key, double fallback) const
    {
        const auto v = raw(key);
        return v ? parse_double(key, *v) : fallback;
    }

    long long integer(const std::string& key, long long fallback) const
    {
        const auto v = raw(key);
        return v ? parse_integer(key, *v) : fallback;
    }

    std::size_t count(const std::string& key, std::size_t fallback) const
    {
        const long long v = integer(key, static_cast<long long>(fallback));
        if (v < 0)
            throw ConfigError("config key '" + key + "' must be >= 0");
        return static_cast<std::size_t>(v);
    }

    bool flag(const std::string& key, bool fallback) const
    {
        const auto v = raw(key);
        if (!v)
            return fallback;
        const std::string s = boost::algorithm::to_lower_copy(*v);
        if (s == "true" || s == "1" || s == "yes")
            return true;
        if (s == "false" || s == "0" || s == "no")
            return false;
        throw ConfigError("config key '" + key + "': '" + *v + "' is not a boolean");
    }

    std::string text(const std::string& key, const std::string& fallback) const { return raw(key).value_or(fallback); }

private:
    const pt::ptree& tree_;
};

PhantomShape parse_shape(const std::string& text, int num_classes)
{
    std::istringstream in(text);
    std::string kind;
    in >> kind;
    PhantomShape s;
    int label = 0;
    if (kind == "disk") {
        s.kind = PhantomShape::Kind::Disk;
        in >> label >> s.cx >> s.cy >> s.radius;
    } else if (kind == "rect") {
        s.kind = PhantomShape::Kind::Rectangle;
        in >> label >> s.x0 >> s.y0 >> s.x1 >> s.y1;
    } else {
        throw ConfigError("config key 'phantom.shapes': unknown shape '" + kind + "' (use disk or rect)");
    }
    std::string rest;
    if (in.fail() || (in >> rest))
        throw ConfigError("config key 'phantom.shapes': cannot parse '" + trimmed(text) +
                          "' (disk LABEL CX CY R or rect LABEL X0 Y0 X1 Y1)");
    if (label < 1 || label > num_classes)
        throw ConfigError("config key 'phantom.shapes': label " + std::to_string(label) + " outside 1.." +
                          std::to_string(num_classes));
    s.label = label - 1;
    return s;
}

std::string format_shape(const PhantomShape& s)
{
    if (s.kind == PhantomShape::Kind::Disk)
        return "disk " + std::to_string(s.label + 1) + " " + format_double(s.cx) + " " + format_double(s.cy) + " " +
               format_double(s.radius);
    return "rect " + std::to_string(s.label + 1) + " " + format_double(s.x0) + " " + format_double(s.y0) + " " +
           format_double(s.x1) + " " + format_double(s.y1);
}

RunConfig from_tree(const pt::ptree& tree)
{
    const Reader r(tree);
    RunConfig c;
    const auto seed = r.raw("run.seed");
    if (!seed)
        throw ConfigError("config key 'run.seed' is required");
    const long long s = parse_integer("run.seed", *seed);
    if (s < 0)
        throw ConfigError("config key 'run.seed' must be >= 0");
    c.seed = static_cast<std::uint64_t>(s);
    c.num_classes = static_cast<int>(r.integer("run.classes", c.num_classes));
    c.snr_db = r.number("run.snr_db", c.snr_db);
    c.noiseless = r.flag("run.noiseless", c.noiseless);
    c.gamma0 = r.number("run.gamma0", c.gamma0);
    c.tol = r.number("run.tol", c.tol);
    c.max_iter = static_cast<int>(r.integer("run.max_iter", c.max_iter));
    c.init = r.text("run.init", c.init);
    c.kmeans_max_iter = static_cast<int>(r.integer("run.kmeans_max_iter", c.kmeans_max_iter));
    c.volume_step = r.text("run.volume_step", c.volume_step);

    c.grid.nx = r.count("grid.nx", c.grid.nx);
    c.grid.ny = r.count("grid.ny", c.grid.ny);
    c.grid.nz = r.count("grid.nz", c.grid.nz);

    c.op.kind = r.text("operator.kind", c.op.kind);
    c.op.kernel_size = r.count("operator.kernel_size", c.op.kernel_size);
    if (auto d = r.raw("operator.diagonal"))
        c.op.diagonal = parse_list("operator.diagonal", *d);
    c.op.matrix = r.text("operator.matrix", "");
    c.op.angles = r.count("operator.angles", c.op.angles);
    c.op.bins = r.count("operator.bins", c.op.bins);
    c.op.bin_spacing = r.number("operator.bin_spacing", c.op.bin_spacing);

    if (r.has_section("phantom")) {
        PhantomSpec p;
        p.shape = c.grid;
        p.num_classes = c.num_classes;
        p.means = parse_list("phantom.means", r.text("phantom.means", ""));
        p.variances = parse_list("phantom.variances", r.text("phantom.variances", ""));
        const long long bg = r.integer("phantom.background", 1);
        if (bg < 1 || bg > c.num_classes)
            throw ConfigError("config key 'phantom.background' must be in 1.." + std::to_string(c.num_classes));
        p.background = static_cast<int>(bg - 1);
        std::vector<std::string> parts;
        const std::string shapes = r.text("phantom.shapes", "");
        boost::algorithm::split(parts, shapes, boost::is_any_of("|"));
        for (const auto& part : parts)
            if (!trimmed(part).empty())
                p.shapes.push_back(parse_shape(part, c.num_classes));
        c.phantom = std::move(p);
    }
    if (r.has_section("data")) {
        DataSpec d;
        d.measurements = r.text("data.measurements", "");
        d.initial_volume = r.text("data.initial_volume", "");
        d.true_labels = r.text("data.true_labels", "");
        c.data = std::move(d);
    }

    if (auto list = r.raw("potts.gamma0_list"))
        c.potts.gamma0_list = parse_list("potts.gamma0_list", *list);
    c.potts.sweeps = static_cast<int>(r.integer("potts.sweeps", c.potts.sweeps));
    c.potts.num_classes = static_cast<int>(r.integer("potts.classes", c.potts.num_classes));

    c.oracle.pinned_shape = r.number("oracle.pinned_shape", c.oracle.pinned_shape);
    c.oracle.pinned_v0 = r.number("oracle.pinned_v0", c.oracle.pinned_v0);
    c.oracle.label_sweeps = static_cast<int>(r.integer("oracle.label_sweeps", c.oracle.label_sweeps));
    c.oracle.gibbs_samples = static_cast<int>(r.integer("oracle.gibbs_samples", c.oracle.gibbs_samples));
    c.oracle.gibbs_burn_in = static_cast<int>(r.integer("oracle.gibbs_burn_in", c.oracle.gibbs_burn_in));

    c.output_dir = r.text("output.dir", c.output_dir.string());
    c.write_timings = r.flag("output.timings", c.write_timings);
    return c;
}

}  // namespace

RunConfig parse_config(const std::string& text)
{
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return from_tree(tree);
}

RunConfig load_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ConfigError("file not found: " + path.string());
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_config(buffer.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string to_ini(const RunConfig& c)
{
    pt::ptree tree;
    auto put = [&tree](const std::string& key, const std::string& value) {
        tree.put(pt::ptree::path_type(key, '.'), value);
    };
    auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
    put("run.seed", std::to_string(c.seed));
    put("run.classes", std::to_string(c.num_classes));
    put("run.snr_db", format_double(c.snr_db));
    put("run.noiseless", flag(c.noiseless));
    put("run.gamma0", format_double(c.gamma0));
    put("run.tol", format_double(c.tol));
    put("run.max_iter", std::to_string(c.max_iter));
    put("run.init", c.init);
    put("run.kmeans_max_iter", std::to_string(c.kmeans_max_iter));
    put("run.volume_step", c.volume_step);

    put("grid.nx", std::to_string(c.grid.nx));
    put("grid.ny", std::to_string(c.grid.ny));
    put("grid.nz", std::to_string(c.grid.nz));

    put("operator.kind", c.op.kind);
    put("operator.kernel_size", std::to_string(c.op.kernel_size));
    put("operator.diagonal", join(c.op.diagonal));
    put("operator.matrix", c.op.matrix.string());
    put("operator.angles", std::to_string(c.op.angles));
    put("operator.bins", std::to_string(c.op.bins));
    put("operator.bin_spacing", format_double(c.op.bin_spacing));

    if (c.phantom) {
        const auto& p = *c.phantom;
        put("phantom.means", join(p.means));
        put("phantom.variances", join(p.variances));
        put("phantom.background", std::to_string(p.background + 1));
        std::string shapes;
        for (std::size_t i = 0; i < p.shapes.size(); ++i)
            shapes += (i ? " | " : "") + format_shape(p.shapes[i]);
        put("phantom.shapes", shapes);
    }
    if (c.data) {
        put("data.measurements", c.data->measurements.string());
        put("data.initial_volume", c.data->initial_volume.string());
        put("data.true_labels", c.data->true_labels.string());
    }

    put("potts.gamma0_list", join(c.potts.gamma0_list));
    put("potts.sweeps", std::to_string(c.potts.sweeps));
    put("potts.classes", std::to_string(c.potts.num_classes));

    put("oracle.pinned_shape", format_double(c.oracle.pinned_shape));
    put("oracle.pinned_v0", format_double(c.oracle.pinned_v0));
    put("oracle.label_sweeps", std::to_string(c.oracle.label_sweeps));
    put("oracle.gibbs_samples", std::to_string(c.oracle.gibbs_samples));
    put("oracle.gibbs_burn_in", std::to_string(c.oracle.gibbs_burn_in));

    put("output.dir", c.output_dir.string());
    put("output.timings", flag(c.write_timings));

    std::ostringstream out;
    pt::write_ini(out, tree);
    return out.str();
}

void validate(const RunConfig& c)
{
    auto require_file = [](const std::filesystem::path& p) {
        if (!p.empty() && !std::filesystem::exists(p))
            throw ConfigError("file not found: " + p.string());
    };
    if (c.grid.size() == 0)
        throw ConfigError("config: grid must have at least one voxel");
    if (c.num_classes < 1)
        throw ConfigError("config key 'run.classes' must be >= 1");
    if (!(c.tol > 0.0))
        throw ConfigError("config key 'run.tol' must be > 0");
    if (c.max_iter < 1)
        throw ConfigError("config key 'run.max_iter' must be >= 1");
    if (!(c.snr_db >= 0.0) || !std::isfinite(c.snr_db))
        throw ConfigError("config key 'run.snr_db' must be finite and >= 0");
    if (!(c.gamma0 >= 0.0))
        throw ConfigError("config key 'run.gamma0' must be >= 0");
    if (c.init != "kmeans" && c.init != "otsu")
        throw ConfigError("config key 'run.init' must be kmeans or otsu");
    if (c.volume_step != "damped" && c.volume_step != "jacobi")
        throw ConfigError("config key 'run.volume_step' must be damped or jacobi");
    if (c.init == "otsu" && c.num_classes != 2)
        throw ConfigError("config key 'run.init' = otsu needs run.classes = 2");
    for (double g : c.potts.gamma0_list)
        if (!(g >= 0.0))
            throw ConfigError("config key 'potts.gamma0_list': gamma0 must be >= 0, got " + format_double(g));
    if (c.potts.sweeps < 1)
        throw ConfigError("config key 'potts.sweeps' must be >= 1");
    if (c.potts.num_classes < 1)
        throw ConfigError("config key 'potts.classes' must be >= 1");
    if (c.op.kind == "dense")
        require_file(c.op.matrix);
    if (c.data) {
        if (c.data->measurements.empty())
            throw ConfigError("config key 'data.measurements' is required in a [data] section");
        require_file(c.data->measurements);
        require_file(c.data->initial_volume);
        require_file(c.data->true_labels);
    }
    if (c.phantom) {
        try {
            c.phantom->validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config [phantom]: ") + e.what());
        }
    }
}

std::unique_ptr<LinearOperator> build_operator(const OperatorSpec& spec, const GridShape& grid)
{
    if (spec.kind == "identity")
        return std::make_unique<IdentityOperator>(grid.size());
    if (spec.kind == "diagonal") {
        std::vector<double> d = spec.diagonal;
        if (d.size() == 1)
            d.assign(grid.size(), d.front());
        if (d.size() != grid.size())
            throw ConfigError("config key 'operator.diagonal' needs 1 or " + std::to_string(grid.size()) +
                              " values, got " + std::to_string(spec.diagonal.size()));
        return std::make_unique<DiagonalOperator>(std::move(d));
    }
    if (spec.kind == "dense") {
        auto op = std::make_unique<DenseOperator>(DenseOperator::from_csv(spec.matrix));
        if (op->domain_size() != grid.size())
            throw DimensionError("dense operator columns", grid.size(), op->domain_size());
        return op;
    }
    if (spec.kind == "convolution") {
        if (grid.nz != 1)
            throw ConfigError("convolution operator needs a 2D grid");
        return std::make_unique<Convolution2D>(Convolution2D::box(grid, spec.kernel_size));
    }
    if (spec.kind == "projector") {
        if (grid.nz != 1)
            throw ConfigError("projector needs a 2D grid");
        return std::make_unique<ParallelBeamProjector>(grid,
                                                       ParallelBeamGeometry{spec.angles, spec.bins, spec.bin_spacing});
    }
    throw ConfigError("config key 'operator.kind': unknown operator '" + spec.kind +
                      "' (identity, diagonal, dense, convolution, projector)");
}

}  // namespace gmpvba
