import logging

from glfm import sampler, storage, tasks
from glfm.commands import load_inputs, load_saved_state, pinned_rows
from glfm.exceptions import EXIT_OK
from glfm.schemas import RunConfig

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> int:
    data = load_inputs(config)

    if config.state_path is not None:
        # Reuse a saved chain and only re-derive the exploration outputs
        state = load_saved_state(config, data)
    else:
        state, trace = sampler.run_chains(
            data, config.hp, config.chains, pinned=pinned_rows(config, data), progress=config.progress,
        )
        storage.save_state(config.output_dir / "state.json", state)

    patterns, feature_probs = tasks.extract_patterns(state, config.top_k)

    rows = []
    for d, spec in enumerate(state.specs):
        for value, prob in tasks.empirical_distribution(data, d):
            rows.append(("empirical", spec.name, value, prob))
        for pattern in patterns:
            for value, density in tasks.compute_pdf(pattern, d, state, grid_points=config.grid_points):
                rows.append((pattern.label, spec.name, value, density))

    storage.write_patterns(config.output_dir / "patterns.csv", patterns)
    storage.write_feature_probs(config.output_dir / "feature_probs.csv", feature_probs)
    storage.write_pdfs(config.output_dir / "pdfs.csv", rows)

    print(f"K_plus: {state.K_plus}, {len(patterns)} patterns")
    for pattern in patterns:
        print(f"  {pattern.label} {pattern.empirical_prob:.4f}")
    print(f"wrote patterns.csv, feature_probs.csv and pdfs.csv to {config.output_dir}")
    return EXIT_OK
