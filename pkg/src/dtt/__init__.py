"""Digital twin tests: randomization tests for trio and duo genotype data
built on the meiosis hidden Markov model."""

from .data import GroupPartition, PValueTable, TrioDataset, TrioRecord
from .errors import DegenerateEvidenceError, InputError
from .hmm import (
    GeneticMap,
    HaplotypePair,
    HmmParams,
    bridge_posterior,
    compute_fb_weights,
    posterior_mean_segment,
    sample_ancestry_posterior,
    sample_global_twin,
    sample_local_twin,
    sample_modified_local_twin,
    transition_prob,
)
from .lasso import fit_penalized
from .multitest import (
    DiscoverySet,
    accumulation_test,
    benjamini_hochberg,
    bonferroni,
    combine,
    selective_seqstep,
)
from .rng import KeyedRng
from .statistics import (
    FittedModel,
    LossStatistic,
    Statistic,
    TDTStatistic,
    group_weights,
    loss_statistic,
    tdt_analytic,
    tdt_statistic,
)
from .twin import (
    digital_twin_test,
    local_dtt,
    local_dtt_independent,
    local_dtt_partition,
    quantile_pvalue,
    resolve_duos,
)

__version__ = "0.1.0"
