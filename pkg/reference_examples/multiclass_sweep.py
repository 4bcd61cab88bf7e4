"""
Resolution by tabular-noise degradation sweep of the multiclass problem,
with the result matrix saved to results/.
"""

import logging

from multifix.experiment import Experiment

if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO)

    config = {'data': {'problem': 'multiclass', 'n_samples': 200},
              'run': {'resolutions': [100, 50, 25, 10, 5],
                      'sigmas': [0.0, 5.0, 10.0, 20.0]}}

    result = Experiment(config, seed=1).sweep('results/multiclass_sweep')
    for name, significance in result.fusion_vs_single(0, 0).items():
        print(f'fusion vs {name}: p = {significance.pvalue:.4f}')
