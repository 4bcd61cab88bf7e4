"""
Model assembly, training, evaluation, searches, sweeps and distillation.
"""
from multifix.pipeline.blocks import PipelineModel, assemble
from multifix.pipeline.metrics import (EvalReport, SignificanceResult, balanced_accuracy,
                                       significance_test, spearman_trend)
from multifix.pipeline.training import (AutoEncoder, FoldResult, TrainingHistory, cross_validate,
                                        fit_final, pretrain_autoencoder, run_fold,
                                        train_end_to_end, train_single_modality,
                                        train_supervised_feature, train_with_frozen_encoder)
from multifix.pipeline.search import (SearchResult, enumerate_architectures, hpo_grid_search,
                                      nas_enumerate)
from multifix.pipeline.sweep import (DegradationResult, cell_text, flag_stagnation,
                                     run_bottleneck_sweep, run_degradation_sweep, write_reports,
                                     write_results, write_significance, write_summary)
from multifix.pipeline.distill import (DistillationResult, DistilledBlock, distill,
                                       distill_folds, distill_fusion, distill_tabular,
                                       select_thresholds, write_expressions)
from multifix.pipeline.presets import PRESETS, VARIANTS, pipeline_config, hpo_grid, nas_space
