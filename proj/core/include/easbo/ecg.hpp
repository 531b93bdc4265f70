#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "easbo/eikonal.hpp"
#include "easbo/fem.hpp"
#include "easbo/mesh.hpp"

namespace easbo {

/// Smooth upstroke U(xi) = V0 + (V1 - V0)/2 (tanh(xi / width) + 1).
struct ActionPotentialParams {
    double v_rest = -80.0;    ///< mV
    double v_plateau = 20.0;  ///< mV
    double width = 1.0;       ///< ms
};

double action_potential(double xi, const ActionPotentialParams& params);

/// V_m(x, t) = U(t - tau(x)) at every node.
std::vector<double> transmembrane_field(const ActivationMap& map, double t, const ActionPotentialParams& params);

/// Intracellular conductivities (mS/mm) along and across the fiber.
struct IntracellularConductivity {
    double sigma_long = 0.17;
    double sigma_trans = 0.019;
};

/// G_i = sigma_t I + (sigma_l - sigma_t) l (x) l per element.
std::vector<Eigen::Matrix3d> conductivity_tensors(const SimplicialMesh& mesh, const IntracellularConductivity& cond);

struct Electrode {
    std::string name;
    Vec3 position;
};

/// A lead is a weighted sum of electrode potentials.
struct LeadDefinition {
    std::string name;
    std::vector<std::pair<std::size_t, double>> terms;  ///< (electrode index, weight)
};

/// Per-node lead fields Z_k, one column per lead.
struct LeadFieldSet {
    Eigen::MatrixXd values;  // n x L
    std::vector<std::string> names;
    std::vector<Electrode> electrodes;

    std::size_t num_leads() const { return static_cast<std::size_t>(values.cols()); }
};

/// RA, LA, LL, V1..V6 placed around the mesh bounding box in units of its
/// largest half-extent (x: left, y: superior, z: anterior).
std::vector<Electrode> standard_electrodes(const SimplicialMesh& mesh, double scale = 1.0);

/// Leads I, II, III, aVR, aVL, aVF, V1..V6 over standard_electrodes().
std::vector<LeadDefinition> standard_lead_table();

/// Z for electrode e is x -> 1/(4 pi |x - e|); leads combine electrodes per
/// `table`. Throws PreconditionError when an electrode is within 1 mm of a node.
LeadFieldSet synthetic_lead_fields(const SimplicialMesh& mesh, const std::vector<Electrode>& electrodes,
                                   const std::vector<LeadDefinition>& table);

LeadFieldSet synthetic_lead_fields(const SimplicialMesh& mesh);

/// Uniform time grid t_j = j * dt, j = 0..steps, covering [0, steps*dt].
struct TimeGrid {
    double dt = 1.0;
    std::size_t steps = 0;

    double duration() const { return dt * static_cast<double>(steps); }
    std::size_t size() const { return steps + 1; }
    double at(std::size_t j) const { return dt * static_cast<double>(j); }
    bool operator==(const TimeGrid&) const = default;
};

/// T = factor * max_tau rounded up to a whole number of steps.
TimeGrid make_time_grid(double max_activation_time, double factor = 1.2, double dt = 1.0);

struct EcgTrace {
    TimeGrid grid;
    Eigen::MatrixXd values;  ///< (steps+1) x L

    std::size_t num_leads() const { return static_cast<std::size_t>(values.cols()); }
};

/// Precomputed lead operator W = K_G Z so that V_k(t) = sum_i U(t - tau_i) W_ik,
/// which equals the element-wise integral sum_e |e| (G_i grad V_m) . grad Z_k
/// for P1 interpolants.
class EcgOperator {
public:
    EcgOperator(const SimplicialMesh& mesh, const IntracellularConductivity& cond, const LeadFieldSet& leads);

    EcgTrace simulate(const ActivationMap& map, const ActionPotentialParams& params, const TimeGrid& grid) const;
    const Eigen::MatrixXd& weights() const { return weights_; }

private:
    Eigen::MatrixXd weights_;  // n x L
};

EcgTrace compute_ecg(const SimplicialMesh& mesh, const ActivationMap& map, const IntracellularConductivity& cond,
                     const LeadFieldSet& leads, const ActionPotentialParams& params, const TimeGrid& grid);

/// sum_k int_0^T (V_k - Vref_k)^2 dt with the trapezoidal rule.
double ecg_loss(const EcgTrace& sim, const EcgTrace& ref);

/// Pearson correlation per lead between two traces on the same grid.
std::vector<double> lead_correlations(const EcgTrace& a, const EcgTrace& b);

/// CSV with header "t,lead_1,...,lead_L"; an optional leading '#' line
/// carries metadata.
void write_ecg_csv(const EcgTrace& trace, const std::filesystem::path& path, const std::string& metadata = {});
EcgTrace read_ecg_csv(const std::filesystem::path& path);

/// CSV "node,<lead names>", one row per mesh node.
void write_lead_fields_csv(const LeadFieldSet& leads, const std::filesystem::path& path,
                           const std::string& metadata = {});
/// Electrode positions are not stored; the result has names and values only.
LeadFieldSet read_lead_fields_csv(const std::filesystem::path& path);

}  // namespace easbo
