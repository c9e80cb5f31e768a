"""lotspace: linear optimal transport embeddings for point-cloud cohorts."""

from .data_model import (CellTable, LabelMap, PointCloud, Schema,
                         assign_labels_from_key, binarize_labels,
                         filter_replicates, group_point_clouds, load_cells_csv)
from .ot_solver import (CostMatrix, TransportPlan, cost_matrix, exact_ot,
                        sinkhorn, transport_cost)
from .lot import (LOTEmbedding, Reference, barycenter, barycentric_map,
                  build_reference, embed, interpolate, preimage)
from .classify import (EvalReport, SvmModel, decision_function, evaluate,
                       reshape_weights, stratified_split, train_linear_svm)
from .cocluster import (BiclusterAssignment, bicluster_importance,
                        reorder_heatmap, spectral_bicluster, spectral_cocluster)
from .signatures import (bh_fdr, cluster_signature, ks_two_sample,
                         signature_report)
from .contrast import (DeltaMatrix, SpectrumReport, block_normalize,
                       build_delta, delta_svd, mp_edges, mp_outliers,
                       project_scores, spectrum_report)
from .simgen import (CohortSpec, MixtureSpec, make_two_class_cohort,
                     perturb_cloud, sample_cloud)

__version__ = "0.1.0"
