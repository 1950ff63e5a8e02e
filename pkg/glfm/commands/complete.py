import logging

from glfm import sampler, storage, tasks
from glfm.commands import load_inputs, pinned_rows
from glfm.exceptions import EXIT_OK
from glfm.schemas import RunConfig

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> int:
    data = load_inputs(config)
    pinned = pinned_rows(config, data)

    # Benchmark mode: only the scores leave the process, never the hidden truth
    if config.heldout_fraction:
        report = tasks.benchmark(
            data, config.hp, config.heldout_fraction, config.splits, config.chains,
            fit_transform=config.fit_transform, pinned=pinned, progress=config.progress,
        )
        path = storage.write_scores(config.output_dir / "scores.json", report)
        print(f"mean held-out log-likelihood over {len(report.splits)} splits: {report.mean:.6f}")
        print(f"wrote {path}")
        return EXIT_OK

    result = tasks.complete(data, config.hp, config.chains, pinned=pinned, progress=config.progress)
    completed_path = storage.write_completed(config.output_dir / "completed.csv", result.x_map)
    state_path = storage.save_state(config.output_dir / "state.json", result.hidden)

    print(f"imputed {int(data.missing.sum())} cells, K_plus: {result.hidden.K_plus}")
    print(f"log joint: {sampler.log_joint(result.hidden):.6f}")
    print(f"wrote {completed_path} and {state_path}")
    return EXIT_OK
