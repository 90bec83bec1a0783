"""Protocol step sequences, gating, consensus, and cross-scheme identities."""

import numpy as np
import pytest

from mvedge.dataset import SyntheticSpec, generate_synthetic, sample_views
from mvedge.descriptors import hist, nhi
from mvedge.errors import ConfigError, EmptyInput, NoAvailableNodes
from mvedge.models import extract, toy_models, view_pool
from mvedge.network import round_flops
from mvedge.schemes import (
    RoundOutcome,
    SchemeConfig,
    SchemeId,
    consensus,
    quality_gate,
    run_ci,
    run_ei,
    run_round,
    run_sci_ch,
    run_sci_e,
    run_sei_ch,
    run_sei_e,
)
from mvedge.types import (
    CONTROLLER,
    Context,
    EMPTY_CONTEXT,
    MessageKind,
    MultiViewInstance,
    View,
)

SPEC = SyntheticSpec()
MANIFEST = generate_synthetic(SPEC)
BACKBONE, HEAD = toy_models(SPEC.model_params())


def config_for(scheme, gamma=None, availability=None):
    return SchemeConfig(
        scheme=scheme,
        backbone=BACKBONE,
        head=HEAD,
        gamma=gamma,
        node_availability=availability,
    )


def instance_with_n_views(n, record_idx=0, seed=0):
    record = MANIFEST.instances[record_idx]
    current, context = sample_views(MANIFEST.views(record), n, True, (seed, record_idx))
    views = tuple((i, View(v.pixels, node=i, tag=v.tag)) for i, v in enumerate(current))
    return MultiViewInstance(record.instance_id, record.label, views, tuple(context))


def embedding_context(instance):
    return Context.of_embedding(
        view_pool([extract(BACKBONE, v) for v in instance.context_views])
    )


def uniform_view(color, node, size=8):
    return View(np.full((size, size, 3), color, dtype=np.uint8), node=node)


def kinds_count(trace, kind):
    return sum(1 for m in trace.messages if m.kind is kind)


class TestQualityGate:
    def test_strictly_below_keeps(self):
        assert quality_gate(0.39, 0.4) is True

    def test_boundary_discards(self):
        assert quality_gate(0.4, 0.4) is False

    def test_full_overlap_boundary(self):
        assert quality_gate(1.0, 1.0) is False


class TestConsensus:
    def test_singleton(self):
        assert consensus([7]) == 7

    def test_majority(self):
        assert consensus([2, 5, 2]) == 2

    def test_tie_breaks_to_lowest(self):
        assert consensus([9, 1, 1, 9]) == 1

    def test_empty_raises(self):
        with pytest.raises(EmptyInput):
            consensus([])


class TestCI:
    def test_message_counts(self):
        inst = instance_with_n_views(6)
        out = run_ci(inst, config_for(SchemeId.CI))
        assert kinds_count(out.trace, MessageKind.VIEW) == 6
        assert kinds_count(out.trace, MessageKind.FINAL_PREDICTION) == 6
        assert out.trace.kinds() == {MessageKind.VIEW, MessageKind.FINAL_PREDICTION}
        assert out.transmitted_views == out.available_views == 6
        assert out.next_context.is_empty

    def test_single_node_reduces_to_single_view_pipeline(self):
        inst = instance_with_n_views(1)
        out = run_ci(inst, config_for(SchemeId.CI))
        expected = HEAD.classify(extract(BACKBONE, inst.views[0][1]))
        assert out.prediction == expected

    def test_noiseless_prediction_matches_truth(self):
        for idx in range(len(MANIFEST.instances)):
            inst = instance_with_n_views(4, record_idx=idx)
            out = run_ci(inst, config_for(SchemeId.CI))
            assert out.prediction == inst.true_label

    def test_all_nodes_unavailable(self):
        inst = instance_with_n_views(2)
        with pytest.raises(NoAvailableNodes):
            run_ci(inst, config_for(SchemeId.CI, availability=(False, False)))


class TestSciE:
    def test_gamma_one_transmits_everything(self):
        inst = instance_with_n_views(5)
        out = run_sci_e(inst, config_for(SchemeId.SCI_E, gamma=1.0), embedding_context(inst))
        assert out.transmitted_views == 5
        assert not out.dropped

    def test_gamma_zero_drops_round(self):
        inst = instance_with_n_views(4)
        ctx = embedding_context(inst)
        out = run_sci_e(inst, config_for(SchemeId.SCI_E, gamma=0.0), ctx)
        assert out.dropped
        assert out.transmitted_views == 0
        assert out.next_context is ctx  # context carried over unchanged

    def test_empty_context_transmits_unconditionally(self):
        inst = instance_with_n_views(3)
        out = run_sci_e(inst, config_for(SchemeId.SCI_E, gamma=0.0), EMPTY_CONTEXT)
        assert out.transmitted_views == 3
        assert kinds_count(out.trace, MessageKind.CONTEXT) == 0

    def test_own_embedding_context_gates_that_node(self):
        # context equals node 0's own embedding: node 0 sees similarity
        # 1.0 >= gamma and discards; a different-class node transmits
        v0 = instance_with_n_views(1, record_idx=0).views[0][1]
        other = MANIFEST.instances[-1]
        assert other.label != MANIFEST.instances[0].label
        v1 = View(MANIFEST.pixels(other)[0], node=1)
        inst = MultiViewInstance("x", 0, ((0, View(v0.pixels, node=0)), (1, v1)))
        ctx = Context.of_embedding(extract(BACKBONE, v0))
        out = run_sci_e(inst, config_for(SchemeId.SCI_E, gamma=0.5), ctx)
        senders = {m.sender for m in out.trace.messages if m.kind is MessageKind.EMBEDDING}
        assert senders == {1}

    def test_next_context_pools_received_embeddings(self):
        inst = instance_with_n_views(4)
        out = run_sci_e(inst, config_for(SchemeId.SCI_E, gamma=1.0), embedding_context(inst))
        expected = view_pool([extract(BACKBONE, v) for _, v in inst.views])
        assert np.array_equal(out.next_context.data, expected)


class TestSciCh:
    def test_single_node_never_dropped(self):
        inst = instance_with_n_views(1)
        for gamma in (0.0, 0.4, 0.7, 1.0):
            out = run_sci_ch(inst, config_for(SchemeId.SCI_CH, gamma=gamma))
            assert not out.dropped
            assert out.transmitted_views == 1

    def test_identical_views_fallback_transmits_exactly_one(self):
        views = tuple((i, uniform_view((120, 40, 200), i)) for i in range(4))
        inst = MultiViewInstance("same", 0, views)
        out = run_sci_ch(inst, config_for(SchemeId.SCI_CH, gamma=0.7))
        assert kinds_count(out.trace, MessageKind.VIEW) == 1
        assert out.transmitted_views == 1

    def test_disjoint_chroma_views_both_transmit(self):
        # disjoint supports: NHI(h_i, avg) = 0.5 < 0.7 for both nodes
        inst = MultiViewInstance(
            "disjoint", 0,
            ((0, uniform_view((255, 0, 0), 0)), (1, uniform_view((0, 0, 255), 1))),
        )
        h0 = hist(inst.views[0][1], 32)
        h1 = hist(inst.views[1][1], 32)
        avg = (h0 + h1) / 2
        assert nhi(h0, avg) == pytest.approx(0.5, abs=1e-12)
        out = run_sci_ch(inst, config_for(SchemeId.SCI_CH, gamma=0.7))
        assert out.transmitted_views == 2

    def test_trace_shape(self):
        inst = instance_with_n_views(3)
        out = run_sci_ch(inst, config_for(SchemeId.SCI_CH))
        assert kinds_count(out.trace, MessageKind.HISTOGRAM) == 3
        assert kinds_count(out.trace, MessageKind.CONTEXT) == 3
        assert kinds_count(out.trace, MessageKind.FINAL_PREDICTION) == 3
        assert out.next_context.is_empty


class TestEI:
    def test_unanimity_and_trace(self):
        inst = instance_with_n_views(4)
        out = run_ei(inst, config_for(SchemeId.EI))
        assert out.prediction == inst.true_label
        assert kinds_count(out.trace, MessageKind.LOCAL_PREDICTION) == 4
        assert out.trace.kinds() == {
            MessageKind.LOCAL_PREDICTION,
            MessageKind.FINAL_PREDICTION,
        }


class TestSeiE:
    def test_gamma_one_matches_ei_plus_embedding_traffic(self):
        inst = instance_with_n_views(5)
        ei_out = run_ei(inst, config_for(SchemeId.EI))
        sei_out = run_sei_e(
            inst, config_for(SchemeId.SEI_E, gamma=1.0), embedding_context(inst)
        )
        assert sei_out.prediction == ei_out.prediction
        assert kinds_count(sei_out.trace, MessageKind.EMBEDDING) == 5
        assert sei_out.trace.kinds() == {
            MessageKind.EMBEDDING,
            MessageKind.CONTEXT,
            MessageKind.LOCAL_PREDICTION,
            MessageKind.FINAL_PREDICTION,
        }

    def test_all_gated_drops_but_updates_context(self):
        inst = instance_with_n_views(3)
        out = run_sei_e(inst, config_for(SchemeId.SEI_E, gamma=0.0), embedding_context(inst))
        assert out.dropped
        # embeddings still sent and pooled for the next period
        assert kinds_count(out.trace, MessageKind.EMBEDDING) == 3
        expected = view_pool([extract(BACKBONE, v) for _, v in inst.views])
        assert np.array_equal(out.next_context.data, expected)

    def test_hand_built_gate_selects_subset(self):
        # context = node 0's embedding: node 0 gated out, others vote
        views = tuple(
            (i, View(MANIFEST.pixels(MANIFEST.instances[i])[0], node=i))
            for i in range(3)
        )
        inst = MultiViewInstance("x", 0, views)
        ctx = Context.of_embedding(extract(BACKBONE, views[0][1]))
        out = run_sei_e(inst, config_for(SchemeId.SEI_E, gamma=0.9), ctx)
        voters = {
            m.sender for m in out.trace.messages
            if m.kind is MessageKind.LOCAL_PREDICTION
        }
        assert 0 not in voters
        assert voters  # at least one distinct-class node votes


class TestSeiCh:
    def test_single_node_local_prediction_becomes_final(self):
        inst = instance_with_n_views(1)
        out = run_sei_ch(inst, config_for(SchemeId.SEI_CH))
        local = HEAD.classify(extract(BACKBONE, inst.views[0][1]))
        assert out.prediction == local
        assert not out.dropped

    def test_disjoint_chroma_nodes_both_vote(self):
        inst = MultiViewInstance(
            "disjoint", 0,
            ((0, uniform_view((255, 0, 0), 0)), (1, uniform_view((0, 0, 255), 1))),
        )
        out = run_sei_ch(inst, config_for(SchemeId.SEI_CH, gamma=0.7))
        assert kinds_count(out.trace, MessageKind.LOCAL_PREDICTION) == 2

    def test_exact_message_kind_set(self):
        inst = instance_with_n_views(4)
        out = run_sei_ch(inst, config_for(SchemeId.SEI_CH))
        assert out.trace.kinds() == {
            MessageKind.HISTOGRAM,
            MessageKind.CONTEXT,
            MessageKind.LOCAL_PREDICTION,
            MessageKind.FINAL_PREDICTION,
        }


class TestCrossSchemeInvariants:
    def test_determinism_bit_identical(self):
        from mvedge.schemes import SELECTIVE_SCHEMES

        inst = instance_with_n_views(4)
        ctx = embedding_context(inst)
        for scheme in SchemeId:
            gamma = 0.5 if scheme in SELECTIVE_SCHEMES else None
            cfg = config_for(scheme, gamma=gamma)
            o1 = run_round(inst, cfg, ctx)
            o2 = run_round(inst, cfg, ctx)
            assert o1.prediction == o2.prediction
            assert o1.trace.entries == o2.trace.entries
            assert o1.trace.ops == o2.trace.ops

    def test_transmitted_counts_for_non_selective(self):
        for n in (1, 3, 6):
            inst = instance_with_n_views(n)
            assert run_ci(inst, config_for(SchemeId.CI)).transmitted_views == n
            assert run_ei(inst, config_for(SchemeId.EI)).transmitted_views == n

    def test_availability_mask_silences_node(self):
        inst = instance_with_n_views(3)
        out = run_ci(inst, config_for(SchemeId.CI, availability=(True, False, True)))
        assert out.available_views == 2
        participants = {m.sender for m in out.trace.messages if m.sender != CONTROLLER}
        assert participants == {0, 2}

    def test_dropped_only_for_embedding_selective(self):
        inst = instance_with_n_views(2)
        ctx = embedding_context(inst)
        outcomes = {
            SchemeId.CI: run_ci(inst, config_for(SchemeId.CI)),
            SchemeId.SCI_CH: run_sci_ch(inst, config_for(SchemeId.SCI_CH, gamma=0.0)),
            SchemeId.EI: run_ei(inst, config_for(SchemeId.EI)),
            SchemeId.SEI_CH: run_sei_ch(inst, config_for(SchemeId.SEI_CH, gamma=0.0)),
        }
        for out in outcomes.values():
            assert not out.dropped
        assert run_sci_e(inst, config_for(SchemeId.SCI_E, gamma=0.0), ctx).dropped
        assert run_sei_e(inst, config_for(SchemeId.SEI_E, gamma=0.0), ctx).dropped

    def test_gamma_on_non_selective_rejected(self):
        with pytest.raises(ConfigError):
            config_for(SchemeId.CI, gamma=0.5)

    def test_dropped_sei_ch_shape_is_impossible_but_flops_handle_it(self):
        # an artificial all-gated trace carries only histogram work: no
        # model FLOPs anywhere
        inst = instance_with_n_views(3)
        out = run_sei_ch(inst, config_for(SchemeId.SEI_CH))
        hist_only = RoundOutcome(
            prediction=None,
            trace=_hist_only_trace(out),
            transmitted_views=0,
            available_views=3,
            next_context=EMPTY_CONTEXT,
        )
        per_source, controller = round_flops(hist_only)
        assert controller == 0.0
        assert per_source and all(v == 0.0 for v in per_source.values())


def _hist_only_trace(out):
    from mvedge.types import MessageTrace

    trace = MessageTrace()
    for entry in out.trace.entries:
        if entry.message.kind is MessageKind.HISTOGRAM:
            trace.add(entry.message, entry.phase, entry.phase_index)
    for op in out.trace.ops:
        if op.stage == "hist":
            trace.add_op(op.node, op.stage, op.phase_index)
    return trace
