"""Movement-primitive trajectory generation with one-step diffusion policies.

Subpackages and modules:

- prodmp: closed-form primitive decoder (basis precomputation, decoding,
  least-squares fitting)
- nets: small feed-forward approximators with explicit reverse-mode
  gradients and an Adam optimizer
- teacher: multi-step denoising-diffusion policy over trajectories
- student: one-step consistency-distilled policy over primitive parameters
- envs: scripted-expert toy environments and dataset generation
- control: receding-horizon execution loop with latency accounting
- cli: command-line pipeline (data, training, distillation, evaluation,
  benchmarks, reports)
"""

__version__ = "0.1.0"
