"""Profile ingestion and prior conversion."""

import json
import logging

import pytest

from edgesched.profiles import (
    LLM,
    SDXL,
    ProfileError,
    RawProfileRecord,
    default_profiles_path,
    load_profiles,
    prior_from_llm,
    prior_from_sd,
    priors_from_json,
    priors_from_records,
    priors_to_json,
)

LLM_LINE = {
    "device_name": "dev-a",
    "model_id": "llama3.1-8b-edge",
    "scenario": "SingleStream",
    "ttft_ms_p99": 1024,
    "tpot_ms_p99": 50,
}


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


def test_load_single_llm_record(tmp_path):
    path = write_jsonl(tmp_path / "p.jsonl", [LLM_LINE])
    records = load_profiles(path)
    assert len(records) == 1
    rec = records[0]
    assert rec.kind == LLM
    assert rec.device_name == "dev-a"
    assert rec.ttft_ms_p99 == 1024
    assert rec.tpot_ms_p99 == 50


def test_empty_file_empty_list_no_warnings(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        assert load_profiles(path) == []
    assert len(caplog.records) == 0


def test_non_singlestream_skipped_with_one_warning(tmp_path, caplog):
    offline = dict(LLM_LINE, scenario="Offline")
    path = write_jsonl(tmp_path / "p.jsonl", [offline, LLM_LINE])
    with caplog.at_level(logging.WARNING):
        records = load_profiles(path)
    assert len(records) == 1
    assert sum("skipping" in r.message for r in caplog.records) == 1


def test_unknown_extra_fields_ignored(tmp_path):
    line = dict(LLM_LINE, submitter="someone", power_w=12.5)
    path = write_jsonl(tmp_path / "p.jsonl", [line])
    assert len(load_profiles(path)) == 1


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text(json.dumps(LLM_LINE) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(ProfileError, match=":2"):
        load_profiles(path)


def test_invariant_violation_names_field(tmp_path):
    bad = dict(LLM_LINE, tpot_ms_p99=-3)
    path = write_jsonl(tmp_path / "p.jsonl", [bad])
    with pytest.raises(ProfileError, match="tpot_ms_p99"):
        load_profiles(path)


def test_mixed_kind_fields_rejected(tmp_path):
    bad = dict(LLM_LINE, latency_ms_p99=5000)
    path = write_jsonl(tmp_path / "p.jsonl", [bad])
    with pytest.raises(ProfileError):
        load_profiles(path)


def test_unreadable_file_fatal(tmp_path):
    with pytest.raises(ProfileError, match="cannot read"):
        load_profiles(tmp_path / "missing.jsonl")


@pytest.mark.parametrize(
    "ttft,tpot,alpha,beta",
    [(1024, 50, 1.0, 50.0), (2048, 80, 2.0, 80.0), (512, 25, 0.5, 25.0)],
)
def test_prior_from_llm_conversion(ttft, tpot, alpha, beta):
    rec = RawProfileRecord("d", "llama3.1-8b-edge", "SingleStream", ttft_ms_p99=ttft, tpot_ms_p99=tpot)
    prior = prior_from_llm(rec)
    assert prior.kind == LLM
    assert prior.alpha0 == alpha
    assert prior.beta0 == beta


def test_prior_from_llm_rejects_sd_record():
    rec = RawProfileRecord(
        "d", "stable-diffusion-xl", "SingleStream", latency_ms_p99=4000, image_size=1024, steps=20
    )
    with pytest.raises(ProfileError, match="LLM"):
        prior_from_llm(rec)


@pytest.mark.parametrize("latency", [4000, 7000])
def test_prior_from_sd_identity(latency):
    rec = RawProfileRecord(
        "d", "stable-diffusion-xl", "SingleStream", latency_ms_p99=latency, image_size=1024, steps=20
    )
    assert prior_from_sd(rec).gamma0 == latency


def test_prior_from_sd_rejects_wrong_config():
    rec = RawProfileRecord(
        "d", "stable-diffusion-xl", "SingleStream", latency_ms_p99=4000, image_size=512, steps=20
    )
    with pytest.raises(ProfileError, match="image_size"):
        prior_from_sd(rec)


def test_alpha_times_reference_recovers_ttft_exactly():
    # Power-of-two ttft values divide exactly in binary floating point.
    for ttft in (256, 512, 1024, 2048, 4096):
        rec = RawProfileRecord(
            "d", "llama3.1-8b-edge", "SingleStream", ttft_ms_p99=ttft, tpot_ms_p99=10
        )
        assert prior_from_llm(rec).alpha0 * 1024 == ttft
    for ttft in (1000, 1234.5, 777):
        rec = RawProfileRecord(
            "d", "llama3.1-8b-edge", "SingleStream", ttft_ms_p99=ttft, tpot_ms_p99=10
        )
        assert abs(prior_from_llm(rec).alpha0 * 1024 - ttft) <= 1e-12 * ttft


def test_prior_roundtrip_bit_exact(fixture_priors):
    text = priors_to_json(fixture_priors)
    again = priors_from_json(text)
    assert again == fixture_priors
    assert priors_to_json(again) == text


def test_load_profiles_order_preserving_and_idempotent(tmp_path):
    rows = [
        dict(LLM_LINE, device_name="a"),
        dict(LLM_LINE, device_name="b", ttft_ms_p99=2048),
        {
            "device_name": "c",
            "model_id": "stable-diffusion-xl",
            "scenario": "SingleStream",
            "latency_ms_p99": 4000,
            "image_size": 1024,
            "steps": 20,
        },
    ]
    path = write_jsonl(tmp_path / "p.jsonl", rows)
    first = load_profiles(path)
    second = load_profiles(path)
    assert [r.device_name for r in first] == ["a", "b", "c"]
    assert first == second


def test_default_fixture_loads_as_expected_pool():
    records = load_profiles(default_profiles_path())
    priors = priors_from_records(records)
    assert [p.kind for p in priors] == [LLM, LLM, SDXL, SDXL]
    assert priors[0].alpha0 == 1.0 and priors[0].beta0 == 50.0
    assert priors[1].alpha0 == 2.0 and priors[1].beta0 == 80.0
    assert priors[2].gamma0 == 4000.0
    assert priors[3].gamma0 == 7000.0
