#include "collapselab/datamodel.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "collapselab/io.hpp"
#include "collapselab/rng.hpp"

namespace collapselab {

CovarianceModel::CovarianceModel(SymMatrix a0_, SymMatrix c_) : a0(std::move(a0_)), c(std::move(c_)) {
    if (a0.dim() != c.dim()) throw DimensionError("CovarianceModel: A0 and C differ in dimension");
    sigma = a0 + c;
    commuting = commutes(a0, c, 1e-8);
}

Dataset::Dataset(Matrix pts) : points(std::move(pts)) {
    if (!points.all_finite()) throw InvalidArgument("Dataset: non-finite entries");
}

AugmentationSpec AugmentationSpec::make_isotropic(double sigma) {
    AugmentationSpec s;
    s.kind = Kind::isotropic;
    s.sigma = sigma;
    s.validate();
    return s;
}

AugmentationSpec AugmentationSpec::make_diagonal(std::vector<double> variances) {
    AugmentationSpec s;
    s.kind = Kind::diagonal;
    s.variances = std::move(variances);
    s.validate();
    return s;
}

AugmentationSpec AugmentationSpec::make_structured(double sigma, double theta) {
    AugmentationSpec s;
    s.kind = Kind::structured;
    s.sigma = sigma;
    s.theta = theta;
    s.validate();
    return s;
}

void AugmentationSpec::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("augmentation: sigma must be >= 0");
    if (kind == Kind::structured && !(theta >= 0.0 && theta <= 1.0))
        throw InvalidArgument("augmentation: theta must lie in [0, 1]");
    if (kind == Kind::diagonal)
        for (double v : variances)
            if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("augmentation: variances must be >= 0");
}

void ImbalanceSpec::validate() const {
    double total = 0.0;
    for (double p : proportions) {
        if (!(p >= 0.0)) throw InvalidArgument("imbalance: proportions must be >= 0");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidArgument("imbalance: proportions must sum to 1");
    const std::size_t d = class_covs[0].dim();
    for (int k = 0; k < 2; ++k)
        if (class_covs[k].dim() != d || class_means[k].size() != d)
            throw DimensionError("imbalance: class means and covariances differ in dimension");
}

Dataset sample_gaussian(std::size_t dim, std::size_t n, const SymMatrix& cov, std::uint64_t seed) {
    if (cov.dim() != dim) throw DimensionError("sample_gaussian: covariance dimension differs from dim");
    if (!cov.full().all_finite() || !is_psd(cov)) throw InvalidCovariance("sample_gaussian: covariance is not PSD");
    const SymMatrix root = mat_pow(cov, 0.5);
    Philox rng(seed);
    Matrix pts(n, dim);
    std::vector<double> z(dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : z) v = rng.normal();
        auto row = pts.row(i);
        for (std::size_t r = 0; r < dim; ++r) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) s += root(r, k) * z[k];
            row[r] = s;
        }
    }
    return Dataset(std::move(pts));
}

SymMatrix empirical_cov(const Dataset& ds) {
    const std::size_t d = ds.dim();
    Matrix acc(d, d);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        auto x = ds.points.row(i);
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c) acc(r, c) += x[r] * x[c];
    }
    const double inv = ds.n() ? 1.0 / static_cast<double>(ds.n()) : 0.0;
    SymMatrix out(d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = r; c < d; ++c) out.set(r, c, acc(r, c) * inv);
    return out;
}

SymMatrix augmentation_cov(const AugmentationSpec& spec, std::size_t dim) {
    spec.validate();
    switch (spec.kind) {
    case AugmentationSpec::Kind::isotropic:
        return (spec.sigma * spec.sigma) * SymMatrix::identity(dim);
    case AugmentationSpec::Kind::diagonal:
        if (spec.variances.size() != dim)
            throw DimensionError("augmentation_cov: variance count differs from dim");
        return SymMatrix::diagonal(spec.variances);
    case AugmentationSpec::Kind::structured: {
        if (dim != 2) throw DimensionError("augmentation_cov: structured augmentation needs dim == 2");
        const double s2 = spec.sigma * spec.sigma;
        return SymMatrix::diagonal({s2 * (1.0 - spec.theta), s2 * spec.theta});
    }
    }
    throw InvalidArgument("augmentation_cov: unknown kind");
}

SymMatrix imbalanced_cov(const ImbalanceSpec& spec) {
    spec.validate();
    const std::size_t d = spec.class_covs[0].dim();
    SymMatrix out(d);
    for (int k = 0; k < 2; ++k) {
        const double p = spec.proportions[k];
        const auto& mu = spec.class_means[k];
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c)
                out.set(r, c, out(r, c) + p * (spec.class_covs[k](r, c) + mu[r] * mu[c]));
    }
    return out;
}

void write_dataset_csv(const Dataset& ds, std::ostream& out) {
    std::vector<std::string> fields(ds.dim());
    for (std::size_t j = 0; j < ds.dim(); ++j) fields[j] = "x" + std::to_string(j);
    out << csv_row(fields);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        auto row = ds.points.row(i);
        for (std::size_t j = 0; j < ds.dim(); ++j) fields[j] = format_double(row[j]);
        out << csv_row(fields);
    }
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument("dataset csv: missing header");
    const auto header = csv_split(line);
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] != "x" + std::to_string(j))
            throw InvalidArgument("dataset csv: header column " + std::to_string(j) + " should be x" +
                                  std::to_string(j));
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = csv_split(line);
        if (fields.size() != header.size())
            throw InvalidArgument("dataset csv: row " + std::to_string(rows + 1) + " has wrong field count");
        for (const auto& f : fields) values.push_back(parse_double(f));
        ++rows;
    }
    Matrix pts(rows, header.size());
    std::copy(values.begin(), values.end(), pts.data().begin());
    return Dataset(std::move(pts));
}

} // namespace collapselab
