"""Function spaces on R^n minus R^l: Whitney decompositions, Hardy inequalities,
reinforced and refined-localization Triebel-Lizorkin norms, and the decomposition
theorems as numerical experiments."""

__version__ = "0.1.0"

from .geometry import (CriticalityClass, MultiIndex, ParameterError, PlaneSplit, SmoothnessParams,
                       classify_criticality, distance_weights, smoothness_constants)
from .whitney import (PartitionOfUnity, WhitneyDecomposition, partition_of_unity, verify_whitney,
                      whitney_decompose, whitney_interval)
from .discretize import GridBox, GridFunction, NormReport, sample, triebel_norm, weighted_lp_norm
from .hardy import (WeightSpec, boundary_hardy_quotient, build_fJ, build_subcritical_witness, critical_quotient,
                    hardy_quotient_1d, subcritical_quotient)
from .spaces import (fubini_ratio, homogeneity_ratio, reinforced_norm, rloc_equiv_norm, rloc_norm, rloc_norms,
                     trace_jet)
from .corpus import CORPUS, corpus_entry, default_grid
from .decomposition import (MembershipReport, membership_report, membership_reports, reinforced_divergence_probe,
                            run_critical_experiment, run_noncritical_experiment)

__all__ = [
    "CriticalityClass", "MultiIndex", "ParameterError", "PlaneSplit", "SmoothnessParams", "classify_criticality",
    "distance_weights", "smoothness_constants",
    "PartitionOfUnity", "WhitneyDecomposition", "partition_of_unity", "verify_whitney", "whitney_decompose",
    "whitney_interval",
    "GridBox", "GridFunction", "NormReport", "sample", "triebel_norm", "weighted_lp_norm",
    "WeightSpec", "boundary_hardy_quotient", "build_fJ", "build_subcritical_witness", "critical_quotient",
    "hardy_quotient_1d", "subcritical_quotient",
    "fubini_ratio", "homogeneity_ratio", "reinforced_norm", "rloc_equiv_norm", "rloc_norm", "rloc_norms", "trace_jet",
    "CORPUS", "corpus_entry", "default_grid",
    "MembershipReport", "membership_report", "membership_reports", "reinforced_divergence_probe",
    "run_critical_experiment", "run_noncritical_experiment",
]
