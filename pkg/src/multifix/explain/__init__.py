"""
Inference-stage explanations: Grad-CAM heatmaps, truth tables of the fusion
expression and the explanation bundle.
"""
from multifix.explain.gradcam import Heatmap, grad_cam, explain_samples, pick_samples
from multifix.explain.truth_table import (TruthTable, extract_truth_table, table_equivalence,
                                          table_from_function, input_combinations)
from multifix.explain.bundle import ExplanationBundle, build_bundle, save_bundle, load_bundle
