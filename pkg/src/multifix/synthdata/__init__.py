"""
Synthetic benchmark problems, degradation transforms, k-fold splitting and
ingestion of external datasets.
"""
from multifix.synthdata.dataset import ImageSample, TabularSample, MultimodalDataset
from multifix.synthdata.shapes import (SHAPES, render_shape_image, add_pixel_noise,
                                       add_gaussian_noise, resample_image)
from multifix.synthdata.tabular import make_tabular_classification, threshold_features
from multifix.synthdata.problems import (PROBLEMS, make_multiclass_dataset,
                                         make_multifeature_dataset, make_xor_dataset,
                                         make_dataset)
from multifix.synthdata.folds import FoldPlan, kfold_split
from multifix.synthdata.ingest import ingest_external
from multifix.synthdata.storage import save_dataset, load_dataset
