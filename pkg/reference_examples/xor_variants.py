"""
Train the XOR problem with every training variant for several seeds and
print the mean balanced accuracy of each.
"""

from multifix.experiment import Experiment

variants = ['fusion', 'ae_fusion', 'frozen_ae_fusion', 'hpo_ae_fusion']

for variant in variants:
    for seed in range(100, 103):
        config = {'data': {'problem': 'xor', 'n_samples': 1000},
                  'run': {'variant': variant}}
        report = Experiment(config, seed=seed).train(f'results/xor_{variant}_{seed:05d}')
        print(f'{variant:>18} seed {seed}: {report.mean:.3f} ± {report.std:.3f}')
