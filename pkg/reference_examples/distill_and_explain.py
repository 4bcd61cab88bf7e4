"""
Full multiclass study: training, distillation of the trained folds into
expressions, Grad-CAM explanations and the final report.
"""

import logging

from multifix.experiment import Experiment, report

if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO)

    config = {'data': {'problem': 'multiclass', 'n_samples': 200, 'img_size': 64},
              'gomea': {'threshold_sweep': True},
              'explain': {'per_class': 2}}

    experiment = Experiment(config, seed=123456)
    experiment.train('results/study')
    for result in experiment.distill('results/study'):
        print(result)
        for block in result.blocks:
            print(f'  {block.name} = {block.expression}')
    experiment.explain('results/study')
    print(report('results/study'))
