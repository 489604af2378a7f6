import pytest
from hypothesis import given, strategies as st

from agentmesh.learning import (
    GLOBAL_USER,
    KbFormatError,
    LearningError,
    PolicyEntry,
    PolicyStore,
    SELF,
    phrase_question,
    resolve_by_priority,
    tokenize,
)


def preset(keyword, target):
    return PolicyEntry((keyword,), target, "preset", user=GLOBAL_USER)


@pytest.fixture
def store():
    s = PolicyStore()
    s.register_presets("input-regulator", [preset("map", "map-view-port"), preset("hotel", "information")])
    s.register_presets("map-view-port", [preset("zoom", "magnification"), preset("right", "shifting")])
    return s


def test_preset_keyword_lookup(store):
    hits = store.lookup("input-regulator", "u1", "map to the right")
    assert [e.target for e in hits] == ["map-view-port"]


def test_unknown_text_gives_empty_lookup(store):
    assert store.lookup("input-regulator", "u1", "move it closer") == []


def test_learned_entry_ranked_before_preset(store):
    store.register_presets("map-view-port", [preset("closer", "shifting")])
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification", {"magnification"})
    hits = store.lookup("map-view-port", "u1", "move it closer")
    assert hits[0].target == "magnification"
    assert hits[0].provenance == "learned"


def test_learned_phrase_requires_exact_normalized_text(store):
    store.learn_mapping("map-view-port", "u1", "Move It Closer", "magnification")
    assert store.lookup("map-view-port", "u1", "move it closer")  # case-insensitive identity
    assert store.lookup("map-view-port", "u1", "please move it closer") == []  # no generalization


def test_learning_same_mapping_twice_is_single_entry(store):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", -0.4)
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    entries = [e for _, e in store.learned_entries()]
    assert len(entries) == 1
    assert entries[0].weight == 0.5  # idempotent re-teaching leaves weight alone


def test_reteaching_different_target_replaces_entry(store):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", -0.4)
    store.learn_mapping("map-view-port", "u1", "move it closer", "shifting")
    entries = [e for _, e in store.learned_entries()]
    assert len(entries) == 1
    assert entries[0].target == "shifting"
    assert entries[0].weight == 1.0


def test_per_user_learning_is_isolated(store):
    store.learn_mapping("map-view-port", "u2", "move it closer", "magnification")
    assert store.lookup("map-view-port", "u1", "move it closer") == []
    assert store.lookup("map-view-port", "u2", "move it closer") != []


def test_unknown_community_is_learning_error(store):
    with pytest.raises(LearningError):
        store.learn_mapping("map-view-port", "u1", "move it closer", "nonsense", known_communities={"magnification"})


# -- feedback weight updates (hand-computed oracle) ----------------------------


def weights(store):
    return [e.weight for _, e in store.learned_entries()]


def test_two_negative_feedbacks_unlearn(store):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", -1.0)
    assert weights(store) == [0.5]
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", -1.0)
    assert weights(store) == []  # 0.5 * 0.5 = 0.25 <= threshold -> removed


def test_positive_feedback_closes_half_the_gap(store):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", -1.0)
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", 1.0)
    assert weights(store) == [0.75]


def test_zero_reward_changes_nothing(store):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", 0.0)
    assert weights(store) == [1.0]


def test_feedback_without_matching_entry_is_noop(store):
    store.apply_feedback_conflict("map-view-port", "u1", "whatever", -1.0)
    assert store.learned_entries() == []


@given(st.lists(st.floats(min_value=-1, max_value=1, allow_nan=False), max_size=30))
def test_weights_stay_in_unit_interval_under_any_feedback(rewards):
    store = PolicyStore()
    store.learn_mapping("a", "u1", "do the thing", "c")
    for r in rewards:
        store.apply_feedback_conflict("a", "u1", "do the thing", r)
        for _, e in store.learned_entries():
            assert 0.0 <= e.weight <= 1.0


# -- reset ----------------------------------------------------------------------


def test_system_reset_restores_preset_floor(store):
    before = store.lookup("input-regulator", "u1", "map")
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.reset("system")
    assert store.learned_entries() == []
    assert store.lookup("input-regulator", "u1", "map") == before


def test_user_reset_leaves_other_users(store):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.learn_mapping("map-view-port", "u2", "move it closer", "shifting")
    store.reset("user", "u2")
    remaining = store.learned_entries()
    assert len(remaining) == 1 and remaining[0][1].user == "u1"


def test_double_reset_is_idempotent(store):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.reset("system")
    store.reset("system")
    assert store.learned_entries() == []


# -- persistence ------------------------------------------------------------------


def test_kb_round_trip_preserves_lookups(store, tmp_path):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    store.apply_feedback_conflict("map-view-port", "u1", "move it closer", -0.5)
    path = tmp_path / "kb.jsonl"
    store.save_kb(path)
    fresh = PolicyStore()
    fresh.register_presets("map-view-port", [preset("zoom", "magnification")])
    fresh.load_kb(path)
    assert [(a, e.pattern, e.target, e.weight) for a, e in fresh.learned_entries()] == [
        (a, e.pattern, e.target, e.weight) for a, e in store.learned_entries()
    ]
    assert fresh.lookup("map-view-port", "u1", "move it closer")[0].target == "magnification"


def test_malformed_kb_load_leaves_state_intact(store, tmp_path):
    store.learn_mapping("map-view-port", "u1", "move it closer", "magnification")
    bad = tmp_path / "bad.kb"
    bad.write_text('{"agent": "x", "pattern": broken\n', encoding="utf-8")
    with pytest.raises(KbFormatError):
        store.load_kb(bad)
    assert len(store.learned_entries()) == 1


def test_empty_store_saves_loadable_empty_file(tmp_path):
    store = PolicyStore()
    path = tmp_path / "empty.kb"
    store.save_kb(path)
    fresh = PolicyStore()
    fresh.load_kb(path)
    assert fresh.learned_entries() == []


# -- contradiction resolution -------------------------------------------------------


def test_equal_priorities_ask_the_user():
    r = resolve_by_priority([("magnification", 1), ("shifting", 1)])
    assert r.kind == "ask-user"
    assert r.question == "Do you mean magnification or shifting?"
    assert r.options == ["magnification", "shifting"]


def test_strict_priority_dominance_dispatches():
    r = resolve_by_priority([("locations", 2), ("left", 1)])
    assert r.kind == "dispatch"
    assert r.claimant == "locations"


def test_three_way_question_phrasing():
    r = resolve_by_priority([("a", 1), ("b", 1), ("c", 1)])
    assert r.question == "Do you mean a, b or c?"


@given(
    st.lists(
        st.tuples(st.sampled_from(["a", "b", "c", "d"]), st.integers(min_value=0, max_value=5)),
        min_size=2,
        max_size=6,
    ),
    st.integers(min_value=1, max_value=9),
)
def test_priority_argmax_invariant_under_positive_scaling(claims, scale):
    distinct = {name for name, _ in claims}
    if len(distinct) < 2:
        return
    base = resolve_by_priority(claims)
    scaled = resolve_by_priority([(n, p * scale) for n, p in claims])
    assert base.kind == scaled.kind
    assert base.claimant == scaled.claimant
    assert base.options == scaled.options


def test_entry_validation():
    with pytest.raises(LearningError):
        PolicyEntry((), "x", "preset")
    with pytest.raises(LearningError):
        PolicyEntry(("a",), "x", "preset", user="u1")
    with pytest.raises(LearningError):
        PolicyEntry(("a",), "x", "learned", user=GLOBAL_USER)
    with pytest.raises(LearningError):
        PolicyEntry(("a",), "x", "preset", weight=1.5)


def test_tokenize_normalizes_case_and_punctuation():
    assert tokenize("Move it CLOSER!") == ("move", "it", "closer")
    assert tokenize("") == ()


def test_single_option_question():
    assert phrase_question(["magnification"]) == "Do you mean magnification?"
