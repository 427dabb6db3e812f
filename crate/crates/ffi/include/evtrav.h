#ifndef EVTRAV_H
#define EVTRAV_H

/* Generated by cbindgen from evtrav-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
enum EvtravStatus {
  EVTRAV_STATUS_OK = 0,
  EVTRAV_STATUS_NULL_POINTER = -1,
  EVTRAV_STATUS_INVALID_ARGUMENT = -2,
  EVTRAV_STATUS_DOMAIN_ERROR = -3,
  EVTRAV_STATUS_IO_ERROR = -4,
  EVTRAV_STATUS_PARSE_ERROR = -5,
  EVTRAV_STATUS_INTERNAL = -99,
};
typedef int32_t EvtravStatus;

/**
 * Opaque equal-width discretization handle.
 */
typedef struct EvtravDisc EvtravDisc;

/**
 * Opaque trained evidential model handle.
 */
typedef struct EvtravModel EvtravModel;

/**
 * Physics prior configuration mirrored across the ABI.
 */
typedef struct {
  /**
   * Max grade for the linear-traction model.
   */
  double s_max_lin;
  /**
   * Max grade for the angular-traction model.
   */
  double s_max_ang;
  /**
   * Max vegetation height, meters.
   */
  double h_max;
  /**
   * Uniform-mix weight in [0, 1].
   */
  double w_unif;
  /**
   * Prior evidence.
   */
  double n_phys;
} EvtravPriorConfig;

/**
 * Per-wheel footprint measurements consumed by the physics prior; wheel
 * order is front-left, back-left, back-right, front-right.
 */
typedef struct {
  /**
   * Absolute heading-aligned grade per wheel.
   */
  double slopes[4];
  /**
   * Terrain surface height per wheel, meters.
   */
  double terrain_heights[4];
  /**
   * Vegetation height per wheel, meters.
   */
  double veg_heights[4];
  /**
   * Distances of the two roll wheel pairs, meters.
   */
  double roll_dists[2];
  /**
   * Distances of the two pitch wheel pairs, meters.
   */
  double pitch_dists[2];
  double dirt_ratio;
  double veg_ratio;
} EvtravFootprint;

/**
 * Static, NUL-terminated description of a status code.
 */
const char *evtrav_status_message(int32_t status);

/**
 * Default physics prior configuration.
 */
EvtravPriorConfig evtrav_prior_config_default(void);

/**
 * Creates a discretization of `num_bins` equal cells over `[lo, hi]`.
 * Returns NULL on invalid arguments.
 */
EvtravDisc *evtrav_disc_new(uintptr_t num_bins, double lo, double hi);

/**
 * Frees a discretization handle; NULL is ignored.
 *
 * # Safety
 * `disc` must be NULL or a pointer returned by [`evtrav_disc_new`] that has
 * not been freed yet.
 */
void evtrav_disc_free(EvtravDisc *disc);

/**
 * Number of bins of a discretization handle (0 for NULL).
 *
 * # Safety
 * `disc` must be NULL or a live handle from [`evtrav_disc_new`].
 */
uintptr_t evtrav_disc_num_bins(const EvtravDisc *disc);

/**
 * Writes the bin centers into `out` (length `len`, must equal the bin
 * count).
 *
 * # Safety
 * `disc` must be a live handle; `out` must point to `len` writable doubles.
 */
EvtravStatus evtrav_disc_centers(const EvtravDisc *disc, double *out, uintptr_t len);

/**
 * Cumulative sum of `len` values into `out` (buffers may alias).
 *
 * # Safety
 * `values` must point to `len` readable doubles and `out` to `len` writable
 * doubles.
 */
EvtravStatus evtrav_cumsum(const double *values, uintptr_t len, double *out);

/**
 * Mean of a PMF under the bin centers.
 *
 * # Safety
 * `disc` must be live; `masses` must hold one value per bin; `out` must be
 * writable.
 */
EvtravStatus evtrav_pmf_mean(const EvtravDisc *disc, const double *masses, double *out);

/**
 * Left-tail CVaR of a PMF at risk tolerance `alpha` in (0, 1].
 *
 * # Safety
 * As [`evtrav_pmf_mean`].
 */
EvtravStatus evtrav_cvar_left(const EvtravDisc *disc,
                              const double *masses,
                              double alpha,
                              double *out);

/**
 * Right-tail CVaR of a PMF at risk tolerance `alpha` in (0, 1].
 *
 * # Safety
 * As [`evtrav_pmf_mean`].
 */
EvtravStatus evtrav_cvar_right(const EvtravDisc *disc,
                               const double *masses,
                               double alpha,
                               double *out);

/**
 * One-hot encoding of `value` into `out_masses` (clamped to the range).
 *
 * # Safety
 * `disc` must be live; `out_masses` must hold one value per bin.
 */
EvtravStatus evtrav_one_hot(const EvtravDisc *disc, double value, double *out_masses);

/**
 * Expected PMF of a Dirichlet distribution.
 *
 * # Safety
 * `disc` must be live; `beta` and `out_masses` must hold one value per bin.
 */
EvtravStatus evtrav_dirichlet_mean(const EvtravDisc *disc, const double *beta, double *out_masses);

/**
 * Differential entropy of a Dirichlet distribution.
 *
 * # Safety
 * As [`evtrav_dirichlet_mean`] with a scalar output.
 */
EvtravStatus evtrav_dirichlet_entropy(const EvtravDisc *disc, const double *beta, double *out);

/**
 * Squared earth mover's distance between two PMFs on the same bins.
 *
 * # Safety
 * `disc` must be live; `p` and `y` must hold one value per bin.
 */
EvtravStatus evtrav_emd2(const EvtravDisc *disc, const double *p, const double *y, double *out);

/**
 * Expected squared earth mover's distance to `y` under `Dir(beta)`.
 *
 * # Safety
 * As [`evtrav_emd2`] with concentrations instead of the first PMF.
 */
EvtravStatus evtrav_uemd2(const EvtravDisc *disc, const double *beta, const double *y, double *out);

/**
 * Physics-informed loss `uemd2(beta, y) + kappa * uemd2(beta, phys)`.
 *
 * # Safety
 * As [`evtrav_uemd2`] with an extra PMF argument.
 */
EvtravStatus evtrav_upi_loss(const EvtravDisc *disc,
                             const double *beta,
                             const double *y,
                             const double *phys,
                             double kappa,
                             double *out);

/**
 * Exact gradient of the physics-informed loss with respect to the
 * concentrations, written into `out_grad` (one value per bin).
 *
 * # Safety
 * As [`evtrav_upi_loss`] with a per-bin output buffer.
 */
EvtravStatus evtrav_upi_loss_grad(const EvtravDisc *disc,
                                  const double *beta,
                                  const double *y,
                                  const double *phys,
                                  double kappa,
                                  double *out_grad);

/**
 * Closed-form physics prior PMF for one traversability parameter
 * (0 = linear traction, 1 = angular traction, 2 = roll, 3 = pitch).
 *
 * # Safety
 * `disc` must be live; `footprint` must be readable; `out_masses` must hold
 * one value per bin.
 */
EvtravStatus evtrav_physics_prior(const EvtravDisc *disc,
                                  int32_t param,
                                  const EvtravFootprint *footprint,
                                  EvtravPriorConfig config,
                                  double *out_masses);

/**
 * Loads a trained model checkpoint; returns NULL on failure.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string.
 */
EvtravModel *evtrav_model_load(const char *path);

/**
 * Frees a model handle; NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a live handle from [`evtrav_model_load`].
 */
void evtrav_model_free(EvtravModel *model);

/**
 * Bin count of a loaded model (0 for NULL).
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uintptr_t evtrav_model_bins(const EvtravModel *model);

/**
 * Patch side length (cells) expected by a loaded model (0 for NULL).
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uintptr_t evtrav_model_patch_cells(const EvtravModel *model);

/**
 * Full posterior forward pass for one terrain feature.
 *
 * `elev_patch`, `semantic_patch` and `veg_patch` are row-major
 * `patch_cells x patch_cells` grids. Outputs: `out_expected` holds the four
 * expected PMFs back to back (`4 * bins` values, parameter-major),
 * `out_evidence` the four downscaled evidences, `out_is_ood` the calibrated
 * OOD flag.
 *
 * # Safety
 * All pointers must reference buffers of the documented sizes; `model` and
 * the patches must be live for the duration of the call.
 */
EvtravStatus evtrav_model_forward(const EvtravModel *model,
                                  const double *elev_patch,
                                  const double *semantic_patch,
                                  const double *veg_patch,
                                  uintptr_t patch_len,
                                  const EvtravFootprint *footprint,
                                  double yaw,
                                  double *out_expected,
                                  double *out_evidence,
                                  int32_t *out_is_ood);

#endif  /* EVTRAV_H */
