"""Train one controller and print its learning curve as running-average reward every 10 episodes."""
import argparse

from gustrl.config import build_model, resolve
from gustrl.harness import TrainingProtocol, run_training

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--condition", default="high-lift")
    p.add_argument("--taps", type=int, default=6, choices=(1, 3, 6))
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    cfg = resolve(overrides={"condition": a.condition, "taps": a.taps, "seed": a.seed,
                             "training": {"episodes": a.episodes}})
    protocol = TrainingProtocol(cfg.training.episodes, cfg.training.filters, tuple(cfg.training.hidden))
    result = run_training(build_model(cfg), cfg.hyperparams(), protocol, cfg.seed)
    for ep in range(9, len(result.running_average), 10):
        print(f"{ep + 1:5d}  {result.running_average[ep]:9.3f}")
