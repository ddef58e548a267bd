"""Evidence for genuine tripartite nonlocality from Bell-experiment counts."""
from .behavior import (GHZ_THRESHOLD, BellVector, Behavior, CorrelatorVector,
                       behavior_from_correlators, correlators_from_behavior, depolarized_ghz,
                       deterministic_behavior, extremal_box, jw_pan_nonlinear, jw_pan_witness,
                       no_signalling_residual, standard_witness, uniform_behavior, witness_value)
from .cache import load_vertices
from .ingest import (CountTable, DataError, FourPartyCounts, derive_cao, derive_mao, derive_named,
                     load_bundled, load_counts, load_four_party)
from .mlns import (ConvergenceError, EmpiricalFrequencies, SettingsDistribution, TrialDistribution,
                   empirical_from_counts, mlns_fit, mlns_fit_grouped, zero_adjust)
from .pbr import (EvidenceReport, LockGroup, TestFactor, cao_locks, evidence_curve, log_pvalue,
                  optimize_test_factor, verify_halfspace_reduction)
from .polytope import HRep, VRep, build_ns_hrep, enumerate_vertices, extend_vertices
from .polytope.census import classify_census
from .relabel import Relabeling, relabel, relabeling_group
from .scenario import TRIPARTITE, Scenario

__version__ = "0.1.0"
