"""Persona behaviors and the full simulation loop."""

import random
from datetime import timedelta

import pytest

from conftest import T0
from scambait.engagement import (
    DelayDistribution,
    DelayPolicy,
    EventKind,
    ObservationWindow,
    Status,
    TerminationReason,
)
from scambait.eventlog import event_to_json
from scambait.mail import Direction
from scambait.simulator import (
    BurstPause,
    ConfigError,
    LongLetter,
    OneShotDropper,
    PersistentExtorter,
    ScenarioEntry,
    SimConfig,
    new_persona_state,
    reference_scenario,
    persona_step,
    run_simulation,
    synthesize_body,
)

WINDOW = ObservationWindow(T0, T0 + timedelta(days=30), T0 + timedelta(days=60))
FIXED_1D = DelayPolicy(timedelta(days=1), timedelta(days=1), DelayDistribution.FIXED)


def single_persona_config(persona, delay=FIXED_1D, seed=0):
    entry = ScenarioEntry(persona, T0, "lone@sim.invalid", delay)
    return SimConfig(entries=(entry,), window=WINDOW, seed=seed)


class TestPersonaStep:
    def test_dropper_sends_once_with_pdf(self):
        state = new_persona_state(OneShotDropper(), "s@sim.invalid", "us@bait.invalid")
        rng = random.Random(0)
        state, msg, wake = persona_step(state, None, T0, rng)
        assert msg is not None
        assert msg.direction is Direction.INBOUND
        assert any(a.media_type == "application/pdf" for a in msg.attachments)
        assert wake is None
        # a second wake produces nothing
        state, msg2, _ = persona_step(state, None, T0 + timedelta(days=1), rng)
        assert msg2 is None

    def test_dropper_with_failing_delivery_bounces(self):
        state = new_persona_state(
            OneShotDropper(delivery_fails=True), "s@sim.invalid", "us@bait.invalid"
        )
        rng = random.Random(0)
        state, first, _ = persona_step(state, None, T0, rng)
        reply = first  # any reply triggers the bounce; content is irrelevant
        state, none, wake = persona_step(state, reply, T0 + timedelta(days=1), rng)
        assert none is None and wake is not None
        state, bounce, _ = persona_step(state, None, wake, rng)
        assert bounce is not None
        assert str(bounce.delivery_status) == "5.2.1"
        assert bounce.timestamp > T0 + timedelta(days=1)

    def test_extorter_ends_hanging(self):
        spec = PersistentExtorter(exchanges_before_payment_ask=2, reply_latency=timedelta(hours=6))
        state = new_persona_state(spec, "s@sim.invalid", "us@bait.invalid")
        rng = random.Random(0)
        now = T0
        state, msg, _ = persona_step(state, None, now, rng)
        sent = [msg]
        while True:
            now = now + timedelta(days=1)
            state, none, wake = persona_step(state, msg, now, rng)
            if wake is None:
                break
            state, msg, _ = persona_step(state, None, wake, rng)
            sent.append(msg)
            now = wake
        assert len(sent) == 3  # two regular exchanges, then the payment ask
        assert sent[-1].subject == "Wire transfer instructions"
        assert state.done  # hanged waiting for an acknowledgement
        state, nothing, wake = persona_step(state, sent[-1], now + timedelta(days=2), rng)
        assert nothing is None and wake is None

    def test_burst_pause_message_budget(self):
        spec = BurstPause(
            burst_len=2,
            pause_durations=(timedelta(days=9), timedelta(days=14)),
            reply_latency=timedelta(hours=5),
        )
        state = new_persona_state(spec, "s@sim.invalid", "us@bait.invalid")
        rng = random.Random(0)
        now = T0
        state, msg, _ = persona_step(state, None, now, rng)
        count = 1
        gaps = []
        last_sent_at = now
        while True:
            now = now + timedelta(hours=12)  # our reply lands
            state, none, wake = persona_step(state, msg, now, rng)
            if wake is None:
                break
            gaps.append(wake - now)
            state, msg, _ = persona_step(state, None, wake, rng)
            count += 1
            now = wake
        assert count == 5  # initial + 2 bursts of 2
        assert gaps.count(timedelta(days=9)) == 1
        assert gaps.count(timedelta(days=14)) == 1

    def test_long_letter_exact_chars_and_giving_up(self):
        from scambait.metrics import count_chars

        spec = LongLetter(msg_chars=4572, gives_up_after=1, msg_sentences=48)
        state = new_persona_state(spec, "s@sim.invalid", "us@bait.invalid")
        rng = random.Random(0)
        state, msg, _ = persona_step(state, None, T0, rng)
        assert count_chars(msg.body_text) == 4572
        state, none, wake = persona_step(state, msg, T0 + timedelta(days=1), rng)
        assert none is None and wake is None and state.done


class TestRunSimulation:
    def test_zero_personas(self):
        result = run_simulation(SimConfig(entries=(), window=WINDOW))
        assert result.logs == {} and result.stats == []

    def test_failing_dropper_terminates_with_two_mails(self):
        result = run_simulation(single_persona_config(OneShotDropper(delivery_fails=True)))
        state = result.states["lone@sim.invalid"]
        assert state.status is Status.TERMINATED
        assert state.termination_reason is TerminationReason.DELIVERY_FAILED_PERMANENT
        assert str(state.last_dsn) == "5.2.1"
        assert len(result.threads["lone@sim.invalid"].messages) == 2

    def test_silent_dropper_ends_in_silence_timeout(self):
        result = run_simulation(single_persona_config(OneShotDropper()))
        state = result.states["lone@sim.invalid"]
        assert state.termination_reason is TerminationReason.SCAMMER_SILENCE
        assert len(result.threads["lone@sim.invalid"].messages) == 2

    def test_determinism_byte_identical_logs(self):
        a = run_simulation(reference_scenario(seed=7))
        b = run_simulation(reference_scenario(seed=7))
        assert a.logs.keys() == b.logs.keys()
        for key in a.logs:
            bytes_a = "\n".join(event_to_json(e) for e in a.logs[key])
            bytes_b = "\n".join(event_to_json(e) for e in b.logs[key])
            assert bytes_a == bytes_b

    def test_different_seed_changes_something(self):
        a = run_simulation(reference_scenario(seed=1))
        b = run_simulation(reference_scenario(seed=2))
        a_bodies = [
            e.payload["message"]["body_text"]
            for events in a.logs.values()
            for e in events
            if e.kind is EventKind.SENT
        ]
        b_bodies = [
            e.payload["message"]["body_text"]
            for events in b.logs.values()
            for e in events
            if e.kind is EventKind.SENT
        ]
        assert a_bodies != b_bodies

    def test_reference_scenario_mail_counts(self):
        result = run_simulation(reference_scenario(seed=0))
        by_contact = sorted(result.stats, key=lambda s: s.first_contact_at)
        assert [s.total_mails for s in by_contact] == [2, 2, 2, 12, 2, 10, 2, 14, 2, 18, 2]

    def test_reference_scenario_burst_gaps_in_timeline(self):
        result = run_simulation(reference_scenario(seed=0))
        offsets = [
            e.day_offset for e in result.timeline if e.thread_key == "scammer08@sim.invalid"
        ]
        deltas = {round(b - a, 3) for a, b in zip(offsets, offsets[1:])}
        assert 8.0 in deltas and 16.0 in deltas

    def test_no_send_at_or_after_window_end(self):
        # Persona arriving late: its reply would be scheduled past the window.
        entry = ScenarioEntry(
            OneShotDropper(),
            WINDOW.experiment_end - timedelta(hours=1),
            "late@sim.invalid",
            FIXED_1D,
        )
        result = run_simulation(SimConfig(entries=(entry,), window=WINDOW))
        state = result.states["late@sim.invalid"]
        assert state.termination_reason is TerminationReason.WINDOW_CLOSED
        assert state.outbound_count == 0
        sent = [
            e
            for events in result.logs.values()
            for e in events
            if e.kind is EventKind.SENT
        ]
        assert sent == []

    def test_first_contact_before_window_rejected_by_config(self):
        entry = ScenarioEntry(OneShotDropper(), T0 - timedelta(days=1), "early@sim.invalid")
        with pytest.raises(ConfigError):
            SimConfig(entries=(entry,), window=WINDOW)

    def test_send_effects_conserved(self):
        # Every send produces exactly one persona-side consequence: either the
        # scammer eventually saw it (counted as delivered) or a DSN came back.
        result = run_simulation(reference_scenario(seed=0))
        for key, events in result.logs.items():
            sends = [e for e in events if e.kind is EventKind.SENT and not e.payload["retry"]]
            dsns = [e for e in events if e.kind is EventKind.DSN_RECEIVED]
            assert len(dsns) <= 1
            assert len(sends) == result.states[key].outbound_count

    def test_duplicate_addresses_rejected(self):
        entry = ScenarioEntry(OneShotDropper(), T0, "dup@sim.invalid")
        with pytest.raises(ConfigError):
            SimConfig(entries=(entry, entry), window=WINDOW)


class TestSynthesizeBody:
    def test_zero_sentences(self):
        assert synthesize_body(5, 0) == "mmmmm"

    def test_impossible_combination_rejected(self):
        with pytest.raises(ValueError):
            synthesize_body(3, 4)

    def test_ask_reply_passes_triage(self):
        from scambait.triage import detect_reply_request

        assert detect_reply_request(synthesize_body(200, 3))

    def test_deterministic(self):
        assert synthesize_body(300, 4, variant=2) == synthesize_body(300, 4, variant=2)
