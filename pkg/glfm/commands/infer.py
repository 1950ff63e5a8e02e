import logging

from glfm import sampler, storage
from glfm.commands import load_inputs, load_saved_state, pinned_rows
from glfm.exceptions import EXIT_OK, ConfigError
from glfm.schemas import RunConfig

# Taken from the command line when resuming; every other hyperparameter stays as saved.
SCHEDULE_FIELDS = ("iterations", "burn_in", "keep_last", "refresh_every")

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> int:
    data = load_inputs(config)

    if config.state_path is not None:
        if config.chains != 1:
            raise ConfigError("--state resumes a single chain; drop --chains")
        saved = load_saved_state(config, data)
        hp = saved.hp.model_copy(update={field: getattr(config.hp, field) for field in SCHEDULE_FIELDS})
        logger.info("Resuming from sweep %d of %d", saved.iteration, hp.iterations)
        state, trace = sampler.run_chain(data, hp, initial=saved, progress=config.progress)
    else:
        state, trace = sampler.run_chains(
            data, config.hp, config.chains, pinned=pinned_rows(config, data), progress=config.progress,
        )

    state_path = storage.save_state(config.output_dir / "state.json", state)
    trace_path = storage.write_trace(config.output_dir / "trace.ndjson", trace)

    print(f"K_plus: {state.K_plus}")
    print(f"log joint: {sampler.log_joint(state):.6f}")
    print(f"wrote {state_path} and {trace_path}")
    return EXIT_OK
