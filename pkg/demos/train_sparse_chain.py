"""Train on a short sparse chain and print the learning curve.

Runs both arms of the standard comparison -- shaping off, then on -- at a
size small enough to finish in seconds, and dumps the usual run artifacts
next to this script under ./demo_runs/.

Note the small replay buffer: it is deliberate.  On tiny problems a huge
buffer keeps replaying step-limit timeouts from the early random-walk
episodes forever, which drags the value table back down; a few hundred
slots lets them age out.
"""

from pathlib import Path

from ssrs.config import RunConfig, apply_overrides
from ssrs.training import train, write_run_outputs

OVERRIDES = [
    "episodes=80",
    "env.length=8",
    "env.max_steps=24",
    "buffer_capacity=300",
    "eval_interval=8",
    "seed=5",
]

out_root = Path(__file__).parent / "demo_runs"

for arm in ("off", "on"):
    config = apply_overrides(RunConfig(), OVERRIDES + [f"shaping={arm}"])
    record, backbone, params, buffer = train(config)

    out_dir = out_root / f"shaping_{arm}" / f"seed_{config.seed}"
    write_run_outputs(record, config, out_dir)

    print(f"--- shaping {arm} ---")
    print(f"{'episode':>8} {'eval score':>11} {'best':>6} {'gate':>6} "
          f"{'shaped steps':>13}")
    rows = list(zip(record.episodes, record.scores, record.best, record.lam,
                    record.shaped_count))
    for ep, score, best, lam, shaped in rows[:: max(1, len(rows) // 8)]:
        print(f"{ep:8d} {score:11.2f} {best:6.2f} {lam:6.3f} {shaped:13d}")
    summary = record.summary()
    print(f"first success at episode {summary['first_success_episode']}, "
          f"final success rate {summary['final_success_rate']:.2f}")
    print(f"buffer holds {len(buffer)} transitions; "
          f"artifacts in {out_dir}\n")

print("both arms solve the chain.  at this scale the confidence gate never "
      "opens (shaped steps stay 0): the estimator sees too few labelled "
      "rewards in 80 episodes to clear the rising threshold, so the shaped "
      "arm degrades gracefully to the vanilla learner.")
