"""Deterministic workload generation."""

import pytest

from edgesched.profiles import LLM, SDXL
from edgesched.sim.workload import INPUT_BINS, OUTPUT_BINS, TOKEN_BIN_CYCLE, generate_workload


def test_default_stream_arrivals_and_kinds():
    tasks = generate_workload(4, lam=0.5)
    assert [t.arrival_time for t in tasks] == [0, 2000, 4000, 6000]
    assert [t.kind for t in tasks] == [LLM, SDXL, LLM, SDXL]


def test_zero_horizon_empty_stream():
    assert generate_workload(0, lam=0.5) == []


def test_first_two_llm_tasks_follow_row_major_cycle():
    tasks = generate_workload(4, lam=0.5)
    llm = [t for t in tasks if t.kind == LLM]
    assert (llm[0].n_in, llm[0].n_out) == (256, 32)
    assert (llm[1].n_in, llm[1].n_out) == (256, 64)


def test_bin_cycle_is_row_major_and_repeats():
    assert TOKEN_BIN_CYCLE[:4] == ((256, 32), (256, 64), (256, 128), (512, 32))
    tasks = generate_workload(40, lam=0.5)
    llm = [t for t in tasks if t.kind == LLM]
    for i, task in enumerate(llm):
        assert (task.n_in, task.n_out) == TOKEN_BIN_CYCLE[i % 9]


def test_sdxl_tasks_carry_no_token_lengths():
    tasks = generate_workload(4, lam=0.5)
    sd = [t for t in tasks if t.kind == SDXL]
    assert all(t.n_in is None and t.n_out is None for t in sd)


def test_arrival_spacing_follows_rate():
    tasks = generate_workload(3, lam=2.0)
    assert [t.arrival_time for t in tasks] == [0, 500, 1000]


def test_token_bins_match_declared_grid():
    tasks = generate_workload(60, lam=0.5)
    llm = [t for t in tasks if t.kind == LLM]
    assert {t.n_in for t in llm} == set(INPUT_BINS)
    assert {t.n_out for t in llm} == set(OUTPUT_BINS)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        generate_workload(-1, lam=0.5)
    with pytest.raises(ValueError):
        generate_workload(4, lam=0.0)
    with pytest.raises(ValueError):
        generate_workload(4, lam=0.5, mixture="bogus")


def test_custom_mixture_rule():
    tasks = generate_workload(4, lam=0.5, mixture=lambda k: LLM)
    assert all(t.kind == LLM for t in tasks)
