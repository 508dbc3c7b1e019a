"""Config parsing, file mailbox, and service flows (approval, restart, replay)."""

from datetime import timedelta

import pytest

from conftest import T0, make_msg
from scambait.clock import VirtualClock
from scambait.engagement import (
    DelayDistribution,
    DelayPolicy,
    IllegalTransition,
    ObservationWindow,
)
from scambait.gateway.config import (
    ConfigError,
    GeneratorConfig,
    MailboxConfig,
    ServiceConfig,
    SimulationConfig,
    load_config,
    load_engine_profile,
    parse_duration,
    save_engine_profile,
)
from scambait.gateway.mailbox import FileMailbox, dsn_from_smtp_error
from scambait.gateway.service import Service
from scambait.mail import MailboxFormat
from scambait.reply_engine import GuardPolicy
from scambait.simulator import synthesize_body

WINDOW = ObservationWindow(T0, T0 + timedelta(days=30), T0 + timedelta(days=60))


def make_service_config(tmp_path, approval=True, mailbox_path="", mailbox_format="maildir"):
    return ServiceConfig(
        window=WINDOW,
        data_dir=tmp_path / "data",
        delay=DelayPolicy(timedelta(hours=1), timedelta(hours=1), DelayDistribution.FIXED),
        guard=GuardPolicy(),
        generator=GeneratorConfig(kind="template", seed=3),
        mailbox=MailboxConfig(kind="file", path=str(mailbox_path), format=mailbox_format),
        simulation=SimulationConfig(),
        approval_required=approval,
        poll_interval=0.05,
    )


def make_virtual_service(tmp_path, **kwargs) -> Service:
    config = make_service_config(tmp_path, **kwargs)
    config.data_dir.mkdir(parents=True, exist_ok=True)
    return Service(config, clock=VirtualClock(T0))


ELIGIBLE_BODY = synthesize_body(300, 4)  # ends with a question


class TestConfigFile:
    def test_minimal_config(self, tmp_path):
        path = tmp_path / "scambait.conf"
        path.write_text(
            "[window]\n"
            "collection_start = 2022-11-12T00:00:00Z\n"
            "collection_end = 2022-12-12T00:00:00Z\n"
            "experiment_end = 2023-01-11T00:00:00Z\n"
            "[service]\n"
            f"data_dir = {tmp_path / 'data'}\n"
        )
        config = load_config(path)
        assert config.window.collection_start == T0
        assert config.delay.distribution is DelayDistribution.LOG_UNIFORM
        assert config.delay.min_delay == timedelta(minutes=15)
        assert config.delay.max_delay == timedelta(days=21)
        assert config.silence_timeout == timedelta(days=30)
        assert config.approval_required is False
        assert config.send_rate_limit_per_day == 10

    def test_missing_window_is_config_error(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("[service]\ndata_dir = /tmp/x\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_env_override(self, tmp_path, monkeypatch):
        path = tmp_path / "scambait.conf"
        path.write_text(
            "[window]\n"
            "collection_start = 2022-11-12T00:00:00Z\n"
            "collection_end = 2022-12-12T00:00:00Z\n"
            "experiment_end = 2023-01-11T00:00:00Z\n"
            "[service]\n"
            f"data_dir = {tmp_path / 'data'}\n"
            "approval_required = false\n"
        )
        monkeypatch.setenv("SCAMBAIT_SERVICE_APPROVAL_REQUIRED", "true")
        monkeypatch.setenv("SCAMBAIT_GUARD_MAX_ATTEMPTS", "5")
        config = load_config(path)
        assert config.approval_required is True
        assert config.guard.max_attempts == 5

    def test_nonexistent_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.conf")

    def test_http_generator_requires_endpoint(self, tmp_path):
        path = tmp_path / "scambait.conf"
        path.write_text(
            "[window]\n"
            "collection_start = 2022-11-12T00:00:00Z\n"
            "collection_end = 2022-12-12T00:00:00Z\n"
            "experiment_end = 2023-01-11T00:00:00Z\n"
            "[generator]\nkind = http\n"
            "[service]\n"
            f"data_dir = {tmp_path / 'data'}\n"
        )
        with pytest.raises(ConfigError):
            load_config(path)

    @pytest.mark.parametrize(
        "text,expected",
        [
            ("15m", timedelta(minutes=15)),
            ("4h", timedelta(hours=4)),
            ("17d", timedelta(days=17)),
            ("900", timedelta(seconds=900)),
            ("2.5d", timedelta(days=2.5)),
        ],
    )
    def test_parse_duration(self, text, expected):
        assert parse_duration(text) == expected

    def test_parse_duration_rejects_garbage(self):
        with pytest.raises(ConfigError):
            parse_duration("soon")

    def test_engine_profile_roundtrip(self, tmp_path):
        config = make_service_config(tmp_path).engine_config()
        save_engine_profile(tmp_path, config, {"a@x.com": config})
        default, overrides = load_engine_profile(tmp_path)
        assert default == config
        assert overrides == {"a@x.com": config}


class TestFileMailbox:
    def test_fetch_exactly_once(self, tmp_path):
        import mailbox as stdlib_mailbox

        md_path = tmp_path / "md"
        md = stdlib_mailbox.Maildir(str(md_path), create=True)
        md.add(
            b"From: s@example.com\r\nTo: bait@example.org\r\nSubject: x\r\n"
            b"Date: Mon, 14 Nov 2022 08:00:00 +0000\r\n\r\nwrite back please"
        )
        md.close()
        fm = FileMailbox(md_path, MailboxFormat.MAILDIR, tmp_path / "cursor", tmp_path / "outbox")
        first = fm.fetch_new()
        assert len(first) == 1
        assert fm.fetch_new() == []
        # a new instance reading the same cursor stays idempotent
        fm2 = FileMailbox(md_path, MailboxFormat.MAILDIR, tmp_path / "cursor", tmp_path / "outbox")
        assert fm2.fetch_new() == []

    def test_send_writes_outbox(self, tmp_path):
        import mailbox as stdlib_mailbox

        md_path = tmp_path / "md"
        stdlib_mailbox.Maildir(str(md_path), create=True).close()
        fm = FileMailbox(md_path, MailboxFormat.MAILDIR, tmp_path / "cursor", tmp_path / "outbox")
        out = make_msg(
            direction=__import__("scambait.mail", fromlist=["Direction"]).Direction.OUTBOUND,
            to_addr="s@example.com",
            body="hello there",
        )
        assert fm.send(out) is None
        files = list((tmp_path / "outbox" / "new").iterdir())
        assert len(files) == 1
        assert b"hello there" in files[0].read_bytes()


class TestToMime:
    def test_outbound_roundtrips_through_parse(self):
        from scambait.gateway.mailbox import to_mime
        from scambait.mail import Direction, parse_rfc822

        out = make_msg(
            direction=Direction.OUTBOUND,
            from_addr="bait@example.org",
            to_addr="kar@example.com",
            subject="Re: your message",
            body="First line.\n\nSecond paragraph, still interested?",
            msg_id="abc123@scambait",
        )
        raw = to_mime(out).as_bytes()
        back = parse_rfc822(raw, direction=Direction.OUTBOUND)
        assert back.body_text.strip() == out.body_text
        assert back.subject == out.subject
        assert back.timestamp == out.timestamp
        assert back.thread_key == "kar@example.com"


class TestDsnFromSmtpError:
    def test_enhanced_code_extracted(self):
        status = dsn_from_smtp_error(550, b"5.2.1 Mailbox unavailable")
        assert str(status) == "5.2.1"

    def test_falls_back_to_reply_class(self):
        assert str(dsn_from_smtp_error(451, b"try again later")) == "4.0.0"
        assert str(dsn_from_smtp_error(550, b"no such user")) == "5.0.0"


class TestServiceFlows:
    def _inbound(self, key="kar@example.com", hours=0):
        return make_msg(
            body=ELIGIBLE_BODY,
            from_addr=key,
            thread_key=key,
            timestamp=T0 + timedelta(hours=hours),
            msg_id=f"in-{key}-{hours}",
        )

    def test_eligible_inbound_lands_in_queue(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        service.load_existing()
        assert service.thread_summaries() == []
        service.handle_inbound(self._inbound())
        items = service.queue_items()
        assert len(items) == 1
        assert items[0]["thread_key"] == "kar@example.com"
        assert items[0]["body"]
        state = service.thread_detail("kar@example.com")["state"]
        assert state["status"] == "AwaitingApproval"

    def test_approve_schedules(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        service.handle_inbound(self._inbound())
        draft_id = service.queue_items()[0]["draft_id"]
        state = service.approve_draft(draft_id)
        assert state["status"] == "Scheduled"
        assert service.queue_items() == []

    def test_edit_with_pii_rejected(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        service.handle_inbound(self._inbound())
        draft_id = service.queue_items()[0]["draft_id"]
        result = service.edit_draft(draft_id, "call me at +1 555 123 4567")
        assert result["rejected"] is True
        assert result["findings"][0]["kind"] == "PhoneNumber"
        # draft unchanged, still approvable
        assert service.queue_items()[0]["draft_id"] == draft_id

    def test_clean_edit_applies(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        service.handle_inbound(self._inbound())
        draft_id = service.queue_items()[0]["draft_id"]
        result = service.edit_draft(draft_id, "A fully clean replacement body. What next?")
        assert result["rejected"] is False
        assert service.queue_items()[0]["body"] == "A fully clean replacement body. What next?"

    def test_reject_regenerates(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        service.handle_inbound(self._inbound())
        first_id = service.queue_items()[0]["draft_id"]
        service.reject_draft(first_id)
        items = service.queue_items()
        assert len(items) == 1
        assert items[0]["draft_id"] != first_id

    def test_stop_thread_and_absorbing(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        service.handle_inbound(self._inbound())
        state = service.stop_thread("kar@example.com")
        assert state["status"] == "Terminated"
        with pytest.raises(IllegalTransition):
            service.stop_thread("kar@example.com")

    def test_out_of_window_first_contact_dropped(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        late = make_msg(
            body=ELIGIBLE_BODY,
            from_addr="late@example.com",
            thread_key="late@example.com",
            timestamp=WINDOW.experiment_end + timedelta(days=1),
        )
        service.handle_inbound(late)
        assert service.thread_summaries() == []

    def test_ineligible_inbound_terminates_thread(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        msg = make_msg(
            body="",  # empty body: nothing to engage
            body_html="<p>x</p>",
            from_addr="html@example.com",
            thread_key="html@example.com",
            timestamp=T0,
        )
        service.handle_inbound(msg)
        state = service.thread_detail("html@example.com")["state"]
        assert state["status"] == "Terminated"

    def test_restart_replays_identical_state(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=True)
        service.handle_inbound(self._inbound())
        service.handle_inbound(self._inbound(key="other@example.com", hours=1))
        draft_id = service.queue_items()[0]["draft_id"]
        service.approve_draft(draft_id)
        before = {rt.thread_key: rt.state for rt in service.runtimes.values()}

        reborn = make_virtual_service(tmp_path, approval=True)
        reborn.load_existing()
        after = {rt.thread_key: rt.state for rt in reborn.runtimes.values()}
        assert after == before
        # message history also survives
        for key, rt in reborn.runtimes.items():
            assert [m.id for m in rt.thread.messages] == [
                m.id for m in service.runtimes[key].thread.messages
            ]

    def test_poll_once_reads_maildir(self, tmp_path):
        import mailbox as stdlib_mailbox

        md_path = tmp_path / "md"
        md = stdlib_mailbox.Maildir(str(md_path), create=True)
        md.add(
            ("From: poll@example.com\r\nTo: bait@example.org\r\nSubject: x\r\n"
             "Date: Mon, 14 Nov 2022 08:00:00 +0000\r\n\r\n" + ELIGIBLE_BODY).encode()
        )
        md.close()
        service = make_virtual_service(tmp_path, approval=True, mailbox_path=md_path)
        assert service.poll_once() == 1
        assert service.poll_once() == 0
        assert service.thread_detail("poll@example.com")["state"]["status"] == "AwaitingApproval"

    def test_auto_mode_schedules_without_approval(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=False)
        service.handle_inbound(self._inbound())
        state = service.thread_detail("kar@example.com")["state"]
        assert state["status"] == "Scheduled"
        assert state["send_at"] is not None

    def test_full_auto_conversation_via_virtual_clock(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=False)
        service.handle_inbound(self._inbound())
        clock = service._base_clock
        assert clock.advance()  # fire the send timer
        detail = service.thread_detail("kar@example.com")
        assert detail["state"]["status"] == "AwaitingScammer"
        assert detail["state"]["outbound_count"] == 1
        # the outbound landed in the data-dir outbox maildir
        outbox = service.config.data_dir / "outbox" / "new"
        assert len(list(outbox.iterdir())) == 1

    def test_outbound_wire_body_composition(self, tmp_path):
        # The sent mail is exactly draft + signature + quoted history, with the
        # draft body untouched.
        from scambait.engagement import EventKind
        from scambait.mail import render_reply

        service = make_virtual_service(tmp_path, approval=False)
        service.handle_inbound(self._inbound())
        runtime = service.runtimes["kar@example.com"]
        prior = [m.id for m in runtime.thread.messages]
        service._base_clock.advance()

        events = service.store.read("kar@example.com")
        draft_body = next(e.payload["body"] for e in events if e.kind is EventKind.DRAFT_READY)
        sent = next(e.payload["message"] for e in events if e.kind is EventKind.SENT)
        history = __import__("scambait.mail", fromlist=["Thread"]).Thread(
            "kar@example.com", [m for m in runtime.thread.messages if m.id in prior]
        )
        assert sent["body_text"] == render_reply(history, draft_body, service.config.signature)
        assert sent["body_text"].startswith(draft_body)
        assert "-- \n" in sent["body_text"]
        assert "\n> " in sent["body_text"]

    def test_inbound_dsn_terminates_thread(self, tmp_path):
        from scambait.mail import DsnStatus

        service = make_virtual_service(tmp_path, approval=False)
        service.handle_inbound(self._inbound())
        service._base_clock.advance()  # send goes out
        bounce = make_msg(
            body="delivery failed",
            from_addr="mailer-daemon@mx.example",
            thread_key="kar@example.com",
            timestamp=T0 + timedelta(hours=2),
            msg_id="bounce-1",
        )
        bounce = __import__("dataclasses").replace(bounce, delivery_status=DsnStatus(5, 2, 1))
        service.handle_inbound(bounce)
        state = service.thread_detail("kar@example.com")["state"]
        assert state["status"] == "Terminated"
        assert state["termination_reason"] == "DeliveryFailedPermanent"
        assert state["last_dsn"] == "5.2.1"

    def test_recover_rearms_send_timer(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=False)
        service.handle_inbound(self._inbound())
        assert service.thread_detail("kar@example.com")["state"]["status"] == "Scheduled"
        # simulate a crash: new process, same data dir, clock already past due
        reborn = make_virtual_service(tmp_path, approval=False)
        reborn.load_existing()
        reborn.recover()
        assert reborn.thread_detail("kar@example.com")["state"]["status"] == "Scheduled"
        assert reborn._base_clock.advance()
        assert reborn.thread_detail("kar@example.com")["state"]["status"] == "AwaitingScammer"

    def test_report_and_timeline_endpoints(self, tmp_path):
        service = make_virtual_service(tmp_path, approval=False)
        service.handle_inbound(self._inbound())
        service._base_clock.advance()
        csv = service.report_csv()
        assert csv.splitlines()[0].startswith("thread_key,")
        assert "kar@example.com" in csv
        tl = service.timeline_csv()
        assert "kar@example.com,0.0,Inbound" in tl
