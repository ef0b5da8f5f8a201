"""Shared fixtures.

The full-scale park run is expensive (nine devices, 260 bursts each) so it is
built once per session and shared by every test that needs realistic data.
Synthetic Gaussian blobs cover everything that only needs separable labels.
"""

from __future__ import annotations

import numpy as np
import pytest

from magprint.evaluation import ParkRun, simulate_park_matrix
from magprint.features import N_FEATURES, FeatureMatrix
from magprint.simulator import ParkSpec, default_park, default_park_spec, make_park
from magprint.stimulus import waveform_preset


@pytest.fixture(scope="session")
def default_devices():
    return default_park()


@pytest.fixture(scope="session")
def park_run_b(default_devices) -> ParkRun:
    """Default nine-device park, waveform B, 260 bursts per device, seed 42."""
    spec = waveform_preset("B", burst_repetitions=260)
    return simulate_park_matrix(default_devices, spec, base_seed=42)


@pytest.fixture(scope="session")
def small_park_run() -> ParkRun:
    """Two devices from different models, 40 bursts each. Cheap but realistic."""
    base = default_park_spec()
    spec = ParkSpec(models=list(base.models[:2]), devices_per_model=(1, 1), rng_seed=7)
    devices = make_park(spec)
    return simulate_park_matrix(devices, waveform_preset("B", burst_repetitions=40), base_seed=11)


def blob_matrix(
    n_classes: int = 2,
    rows_per_class: int = 30,
    informative: tuple[int, ...] = (3, 11),
    separation: float = 1.5,
    informative_sigma: float = 0.5,
    rng_seed: int = 0,
) -> FeatureMatrix:
    """Labelled Gaussian blobs as an 18-column feature matrix.

    Only the 1-based `informative` columns carry class signal (class centers
    equally spaced along each of them); every other column is N(0, 1) noise.
    """
    rng = np.random.default_rng(rng_seed)
    n = n_classes * rows_per_class
    values = rng.normal(size=(n, N_FEATURES))
    device_ids: list[str] = []
    for ci in range(n_classes):
        lo = ci * rows_per_class
        hi = lo + rows_per_class
        center = separation * (2 * ci - (n_classes - 1))
        for f in informative:
            values[lo:hi, f - 1] = center + informative_sigma * rng.normal(size=rows_per_class)
        device_ids += [f"dev_{ci}"] * rows_per_class
    order = rng.permutation(n)
    return FeatureMatrix(
        values=values[order],
        device_ids=[device_ids[i] for i in order],
        session_ids=["synth"] * n,
        segment_indices=list(range(n)),
    )


@pytest.fixture
def blobs_2class() -> FeatureMatrix:
    return blob_matrix(rng_seed=17)
