import numpy as np
import pytest

from helpers import segment_tuples
from sascribe.core import Transcript
from sascribe.pipeline import MeetingInput
from sascribe.simulator import (
    DEFAULT_VOCAB,
    SimConfig,
    UtteranceEvent,
    gen_meeting,
    meeting_from_events,
    read_bundle,
    read_rttm,
    read_transcript_jsonl,
    write_bundle,
    write_rttm,
    write_transcript_jsonl,
)

TINY_VOCAB = ("x", "y", "z")


def onset_map(meeting):
    """frame -> (vocab_id, occurrence_id) for nonzero payload rows."""
    data = meeting.acoustic.data
    out = {}
    for f in np.flatnonzero(data[:, 1]):
        out[int(f)] = (int(data[f, 1]), int(data[f, 2]))
    return out


# --- generator --------------------------------------------------------------


def test_same_seed_same_meeting():
    cfg = SimConfig(seed=11, num_speakers=3, duration_s=45.0, noise_sigma=0.2)
    m1, g1 = gen_meeting(cfg)
    m2, g2 = gen_meeting(cfg)
    assert np.array_equal(m1.acoustic.data, m2.acoustic.data)
    assert np.array_equal(m1.tracker.data, m2.tracker.data)
    assert np.array_equal(g1.prototypes, g2.prototypes)
    assert segment_tuples(g1.transcript) == segment_tuples(g2.transcript)
    assert g1.speaker_intervals == g2.speaker_intervals


def test_different_seeds_differ():
    m1, _ = gen_meeting(SimConfig(seed=1, duration_s=30.0))
    m2, _ = gen_meeting(SimConfig(seed=2, duration_s=30.0))
    assert not np.array_equal(m1.acoustic.data, m2.acoustic.data)


def test_meeting_id_carries_seed():
    m, _ = gen_meeting(SimConfig(seed=7, duration_s=30.0))
    assert m.meeting_id == "sim-000007"


def test_prototypes_are_orthonormal():
    _, gt = gen_meeting(SimConfig(seed=4, num_speakers=4, duration_s=30.0))
    gram = gt.prototypes @ gt.prototypes.T
    assert np.max(np.abs(gram - np.eye(4))) <= 1e-12


def test_noiseless_tracker_frames_are_prototype_or_zero():
    m, gt = gen_meeting(SimConfig(seed=3, num_speakers=1, duration_s=40.0))
    proto = gt.prototypes[0]
    for row in m.tracker.data:
        assert np.array_equal(row, proto) or not row.any()
    assert (m.tracker.data.any(axis=1) == (m.acoustic.data[:, 0] > 0)).all()


def test_payload_onsets_match_reference_words():
    m, gt = gen_meeting(SimConfig(seed=6, num_speakers=3, duration_s=60.0))
    onsets = onset_map(m)
    total_words = sum(len(s.words) for s in gt.transcript.segments)
    assert len(onsets) == total_words
    occurrences = sorted(occ for _, occ in onsets.values())
    assert occurrences == list(range(1, total_words + 1))
    vocab_ids = [vid for vid, _ in onsets.values()]
    assert all(1 <= v <= len(DEFAULT_VOCAB) for v in vocab_ids)
    # onsets only happen on speech frames, and the energy column is a flag
    energies = set(np.unique(m.acoustic.data[:, 0]))
    assert energies <= {0.0, 1.0}
    for f in onsets:
        assert m.acoustic.data[f, 0] == 1.0


def test_payload_stays_consistent_under_overlap():
    cfg = SimConfig(seed=8, num_speakers=3, duration_s=60.0, overlap_ratio=0.6)
    m, gt = gen_meeting(cfg)
    total_words = sum(len(s.words) for s in gt.transcript.segments)
    assert len(onset_map(m)) == total_words
    # verify that some intervals actually overlap, so the setting was exercised
    ivs = sorted((a, b) for _, a, b in gt.speaker_intervals)
    assert any(b1 > a2 for (a1, b1), (a2, b2) in zip(ivs, ivs[1:]))


def test_round_robin_first_appearances_in_index_order():
    for seed in range(6):
        _, gt = gen_meeting(SimConfig(seed=seed, num_speakers=3, duration_s=50.0))
        seen = []
        for seg in gt.transcript.segments:
            if seg.speaker not in seen:
                seen.append(seg.speaker)
        assert seen == [1, 2, 3]


def test_absence_window_silences_speaker():
    cfg = SimConfig(
        seed=5,
        num_speakers=3,
        duration_s=80.0,
        absence_windows=((2, 20.0, 40.0),),
    )
    _, gt = gen_meeting(cfg)
    for spk, a, b in gt.speaker_intervals:
        if spk == 2:
            assert not (a < 40.0 and 20.0 < b)
    # the other speakers still talk inside the window
    assert any(a < 40.0 and 20.0 < b for spk, a, b in gt.speaker_intervals if spk != 2)


def test_utterances_have_sane_shape():
    _, gt = gen_meeting(SimConfig(seed=12, num_speakers=2, duration_s=60.0))
    assert len(gt.speaker_intervals) >= 10
    durations = [b - a for _, a, b in gt.speaker_intervals]
    # lengths are clipped to [5 frames, 4x the mean]; only the final
    # utterance may be cut shorter by the end of the meeting
    assert max(durations) <= 4 * 2.0 + 1e-9
    assert min(durations[:-1]) >= 5 * 0.08 - 1e-9
    for seg in gt.transcript.segments:
        assert len(seg.words) >= 1


@pytest.mark.parametrize(
    "kwargs, match",
    [
        (dict(num_speakers=0), "num_speakers"),
        (dict(num_speakers=5, embed_dim=4), "embed_dim"),
        (dict(duration_s=1.0, mean_utterance_s=2.0), "duration_s"),
        (dict(gap_s=-0.1), "gap_s"),
        (dict(overlap_ratio=1.0), "overlap_ratio"),
        (dict(noise_sigma=-0.5), "noise_sigma"),
        (dict(frame_period_s=0.0814), "frame_period_s"),
        (dict(frame_period_s=0.0), "frame_period_s"),
        (dict(vocab=()), "vocab"),
        (dict(vocab=("two words",)), "vocab"),
        (dict(vocab=("ok", "bad<|",)), "vocab"),
        (dict(absence_windows=((0, 1.0, 2.0),)), "absence window"),
        (dict(absence_windows=((1, 5.0, 5.0),)), "absence window"),
    ],
)
def test_config_validation(kwargs, match):
    with pytest.raises(ValueError, match=match):
        SimConfig(**kwargs)


# --- explicit schedules -----------------------------------------------------


def scripted_cfg(**kwargs):
    defaults = dict(seed=0, num_speakers=2, duration_s=10.0, vocab=TINY_VOCAB)
    defaults.update(kwargs)
    return SimConfig(**defaults)


def test_events_realize_on_exact_frames():
    cfg = scripted_cfg()
    m, gt = meeting_from_events(
        "m", [UtteranceEvent(1, 0.8, 1.6, ("x", "y"))], cfg
    )
    assert segment_tuples(gt.transcript) == [(1, 0.8, 2.4, ("x", "y"))]
    assert gt.speaker_intervals == ((1, 0.8, 2.4),)
    speech = np.flatnonzero(m.acoustic.data[:, 0])
    assert speech.tolist() == list(range(10, 30))
    assert onset_map(m) == {10: (1, 1), 20: (2, 2)}
    assert m.acoustic.rows == 125  # 10 s at 0.08 s per frame


def test_overlap_interleaves_contested_frames():
    cfg = scripted_cfg()
    events = [
        UtteranceEvent(1, 0.0, 1.6, ("x",)),
        UtteranceEvent(2, 0.8, 1.6, ("y",)),
    ]
    m, gt = meeting_from_events("m", events, cfg, prototypes=np.eye(2, 16))
    owner = np.zeros(m.tracker.rows, dtype=int)
    owner[np.flatnonzero(m.tracker.data[:, 0])] = 1
    owner[np.flatnonzero(m.tracker.data[:, 1])] = 2
    # second event takes its free tail plus every other contested frame
    assert owner[20:30].tolist() == [2] * 10
    assert owner[10:20].tolist() == [1, 2, 1, 2, 1, 2, 1, 2, 1, 2]
    assert owner[0:10].tolist() == [1] * 10
    # both events keep their word on a frame they still own
    assert onset_map(m) == {0: (1, 1), 11: (2, 2)}
    # the reference reports the nominal spans, not the interleaving
    assert gt.speaker_intervals == ((1, 0.0, 1.6), (2, 0.8, 2.4))


def test_word_lists_are_truncated_to_owned_frames():
    cfg = scripted_cfg()
    m, gt = meeting_from_events(
        "m", [UtteranceEvent(1, 0.0, 0.8, ("x",) * 50)], cfg
    )
    assert gt.transcript.segments[0].words == ("x",) * 10
    assert len(onset_map(m)) == 10


def test_event_past_the_end_is_dropped():
    cfg = scripted_cfg()
    m, gt = meeting_from_events("m", [UtteranceEvent(1, 12.0, 1.0, ("x",))], cfg)
    assert gt.transcript.segments == ()
    assert not m.acoustic.data.any()


def test_event_validation():
    cfg = scripted_cfg()
    good = UtteranceEvent(1, 2.0, 1.0, ("x",))
    early = UtteranceEvent(1, 0.0, 1.0, ("x",))
    with pytest.raises(ValueError, match="nondecreasing"):
        meeting_from_events("m", [good, early], cfg)
    with pytest.raises(ValueError, match="vocabulary"):
        meeting_from_events("m", [UtteranceEvent(1, 0.0, 1.0, ("nope",))], cfg)
    with pytest.raises(ValueError, match="num_speakers"):
        meeting_from_events("m", [UtteranceEvent(3, 0.0, 1.0, ("x",))], cfg)
    with pytest.raises(ValueError, match="speaker"):
        UtteranceEvent(0, 0.0, 1.0, ("x",))
    with pytest.raises(ValueError, match="duration"):
        UtteranceEvent(1, 0.0, 0.0, ("x",))
    with pytest.raises(ValueError, match="word"):
        UtteranceEvent(1, 0.0, 1.0, ())


# --- RTTM -------------------------------------------------------------------


def test_rttm_example_line():
    text = write_rttm([("spkA", 0.0, 2.5)], "m1")
    assert text == "SPEAKER m1 1 0.00 2.50 <NA> <NA> spkA <NA> <NA>\n"
    assert read_rttm(text) == [("spkA", 0.0, 2.5)]


def test_rttm_round_trip():
    intervals = [(1, 0.0, 2.5), (2, 2.5, 4.0), (1, 10.08, 12.64)]
    back = read_rttm(write_rttm(intervals, "mtg"))
    assert [(s, st, st + d) for s, st, d in back] == [
        ("1", 0.0, 2.5),
        ("2", 2.5, 4.0),
        ("1", 10.08, pytest.approx(12.64)),
    ]


def test_rttm_empty():
    assert write_rttm([], "m") == ""
    assert read_rttm("") == []
    assert read_rttm("\n  \n") == []


def test_rttm_errors():
    with pytest.raises(ValueError, match="line 1: expected 10 RTTM fields, got 8"):
        read_rttm("SPEAKER m1 1 0.00 2.50 <NA> <NA> spkA")
    with pytest.raises(ValueError, match="line 1: unsupported RTTM type 'LEXEME'"):
        read_rttm("LEXEME m1 1 0.00 2.50 <NA> <NA> spkA <NA> <NA>")
    with pytest.raises(ValueError, match="line 2: bad start/duration"):
        read_rttm(
            "SPEAKER m1 1 0.00 2.50 <NA> <NA> spkA <NA> <NA>\n"
            "SPEAKER m1 1 oops 2.50 <NA> <NA> spkA <NA> <NA>"
        )
    with pytest.raises(ValueError, match="duration must be > 0"):
        read_rttm("SPEAKER m1 1 1.00 0.00 <NA> <NA> spkA <NA> <NA>")
    with pytest.raises(ValueError, match="start 3.0 >= end 3.0"):
        write_rttm([("a", 3.0, 3.0)], "m")


# --- transcript JSONL -------------------------------------------------------


def test_jsonl_round_trip():
    _, gt = gen_meeting(SimConfig(seed=2, num_speakers=2, duration_s=30.0))
    text = write_transcript_jsonl(gt.transcript)
    back = read_transcript_jsonl(text, gt.transcript.meeting_id)
    assert segment_tuples(back) == segment_tuples(gt.transcript)
    assert back.meeting_id == gt.transcript.meeting_id


def test_jsonl_empty_and_blank_lines():
    assert read_transcript_jsonl("").segments == ()
    assert read_transcript_jsonl("\n\n").segments == ()
    assert write_transcript_jsonl(Transcript("m", ())) == ""


def test_jsonl_field_order_is_stable():
    _, gt = gen_meeting(SimConfig(seed=2, num_speakers=1, duration_s=20.0))
    first = write_transcript_jsonl(gt.transcript).splitlines()[0]
    assert first.index('"speaker"') < first.index('"t_st"') < first.index('"t_ed"') < first.index('"words"')


def test_jsonl_errors():
    with pytest.raises(ValueError, match="line 1: not valid JSON"):
        read_transcript_jsonl("{nope")
    with pytest.raises(ValueError, match="line 1: expected an object"):
        read_transcript_jsonl("[1, 2]")
    with pytest.raises(ValueError, match="line 2: missing key 'words'"):
        read_transcript_jsonl(
            '{"speaker": 1, "t_st": 0.0, "t_ed": 1.0, "words": ["a"]}\n'
            '{"speaker": 1, "t_st": 1.0, "t_ed": 2.0}'
        )
    with pytest.raises(ValueError, match="words must be a list of strings"):
        read_transcript_jsonl('{"speaker": 1, "t_st": 0.0, "t_ed": 1.0, "words": "a"}')


# --- bundles ----------------------------------------------------------------


def test_bundle_round_trip(tmp_path):
    cfg = SimConfig(seed=9, num_speakers=2, duration_s=30.0, noise_sigma=0.3)
    meeting, gt = gen_meeting(cfg)
    path = tmp_path / "bundle"
    write_bundle(str(path), meeting, cfg)
    loaded, cfg_back = read_bundle(str(path))
    assert cfg_back == cfg
    assert loaded.meeting_id == meeting.meeting_id
    # payload columns are small integers, exact in 32-bit floats
    assert np.array_equal(loaded.acoustic.data, meeting.acoustic.data)
    assert np.array_equal(
        loaded.tracker.data, meeting.tracker.data.astype("<f4").astype(np.float64)
    )
    assert loaded.acoustic.frame_period_s == meeting.acoustic.frame_period_s
    assert segment_tuples(loaded.reference.transcript) == segment_tuples(gt.transcript)
    for got, want in zip(loaded.reference.intervals, gt.speaker_intervals):
        assert got[0] == want[0]
        assert got[1] == pytest.approx(want[1], abs=1e-9)
        assert got[2] == pytest.approx(want[2], abs=1e-9)


def test_bundle_without_config_or_reference(tmp_path):
    meeting, _ = gen_meeting(SimConfig(seed=1, duration_s=20.0))
    bare = MeetingInput(
        meeting_id=meeting.meeting_id,
        acoustic=meeting.acoustic,
        tracker=meeting.tracker,
        reference=None,
    )
    path = tmp_path / "bare"
    write_bundle(str(path), bare)
    loaded, cfg_back = read_bundle(str(path))
    assert cfg_back is None
    assert loaded.reference is None
    assert not (path / "ref.jsonl").exists()


def test_bundle_format_check(tmp_path):
    path = tmp_path / "b"
    path.mkdir()
    (path / "meta.json").write_text('{"format": "other", "meeting_id": "m"}')
    with pytest.raises(ValueError, match="unsupported bundle format 'other'"):
        read_bundle(str(path))


def test_f32_corruption_is_detected(tmp_path):
    cfg = SimConfig(seed=1, duration_s=20.0)
    meeting, _ = gen_meeting(cfg)
    path = tmp_path / "b"
    write_bundle(str(path), meeting, cfg)
    payload = (path / "acoustic.f32").read_bytes()
    (path / "acoustic.f32").write_bytes(payload[:-4])
    with pytest.raises(ValueError, match="payload bytes"):
        read_bundle(str(path))
    (path / "acoustic.f32").write_bytes(b"not a header\n")
    with pytest.raises(ValueError, match="bad .f32 header"):
        read_bundle(str(path))


def test_missing_bundle_raises_file_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_bundle(str(tmp_path / "nowhere"))
