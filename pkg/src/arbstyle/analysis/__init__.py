from .embedding import (
    PCAResult,
    grid_offsets,
    identity_embedding,
    interpolate_embedding,
    pca,
    pca_grid_embeddings,
    pca_grid_stylize,
)
from .stats import (
    betainc,
    box_stats,
    linear_regression,
    paired_t_test,
    percentile,
    silhouette,
    student_t_sf2,
    summarize,
)
from .studies import (
    ScalingResult,
    StudyRecord,
    StudyResult,
    baseline_comparison,
    check_disjoint,
    cross_dataset_study,
    evaluate_pairs,
    gram_distance,
    gram_proximity_study,
    generalization_study,
    records_csv,
    scaling_experiment,
    style_grams,
    summarize_records,
    summary_csv,
    write_scaling,
    write_study,
)
from .tsne import TSNEResult, tsne

__all__ = [name for name in dir() if not name.startswith("_")]
