import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorsynth.text import (
    DescriptorSet,
    GenerationExhaustedError,
    RadiologyReport,
    TransportError,
    cosine,
    embed_text,
    extract_descriptors,
    generate_variants,
    load_vocabulary,
    mock_client,
    render_frame,
    validate_similarity,
)
from tumorsynth.volumes.phantom import PHANTOM_TERMS


@pytest.fixture(scope="module")
def vocab():
    return load_vocabulary()


@pytest.fixture(scope="module")
def client(vocab):
    return mock_client(vocab)


class TestVocabulary:
    def test_organs_present(self, vocab):
        assert set(vocab.organs) == {"liver", "pancreas", "kidney"}

    def test_phrases_unique_and_nonempty(self, vocab):
        for organ in vocab.organs:
            phrases = vocab.phrases(organ)
            assert phrases
            assert len(phrases) == len(set(phrases))

    def test_covers_every_phantom_term(self, vocab):
        # every descriptor the phantom generator accepts must be a
        # vocabulary phrase for every organ
        for organ in vocab.organs:
            for term in PHANTOM_TERMS:
                assert vocab.contains(organ, term), (organ, term)

    def test_longest_match_wins(self, vocab):
        terms = vocab.match_terms("kidney", "a heterogeneously enhancing mass")
        assert terms == ["heterogeneously enhancing"]

    def test_word_boundaries(self, vocab):
        # "enhancing" must not fire inside "hyperenhancing"
        assert vocab.match_terms("liver", "hyperenhancing lesions") == ["hyperenhancing"]

    def test_alias_canonicalization(self, vocab):
        assert vocab.match_terms("liver", "multiple hepatic hypodensities") == ["hypodense"]
        assert vocab.match_terms("kidney", "benign cysts") == ["cystic"]


class TestExtractDescriptors:
    def test_ill_defined_hypoenhancing_report(self, vocab, client):
        report = RadiologyReport(
            "qBAQV8his3", "liver",
            "Slightly enlarged ill-defined hypoenhancing liver lesions.",
        )
        d = extract_descriptors(report, client, vocab)
        assert {"ill-defined", "hypoenhancing"} <= set(d.terms)
        assert not d.no_match

    def test_unremarkable_report_flags_no_match(self, vocab, client):
        report = RadiologyReport("r0", "liver", "Unremarkable")
        d = extract_descriptors(report, client, vocab)
        assert d.terms == ()
        assert d.no_match

    def test_cystic_pancreas_sentence(self, vocab, client):
        report = RadiologyReport(
            "r1", "pancreas", "a cystic lesion in the pancreas is present"
        )
        d = extract_descriptors(report, client, vocab)
        assert d.terms == ("cystic",)

    def test_cleaned_text_is_canonical_frame(self, vocab, client):
        report = RadiologyReport("r2", "liver", "hypodense lesion noted")
        d = extract_descriptors(report, client, vocab)
        assert d.cleaned_text == "a hypodense lesion in the liver"

    def test_transport_failure_is_retryable(self, vocab):
        class Flaky:
            def roundtrip(self, line):
                raise TransportError("connection reset")

        from tumorsynth.text import LMClient

        report = RadiologyReport("r3", "liver", "hypodense lesion")
        with pytest.raises(TransportError):
            extract_descriptors(report, LMClient(Flaky()), vocab)


class TestEmbedText:
    def test_deterministic(self):
        a = embed_text("hypodense lesion in the liver")
        b = embed_text("hypodense lesion in the liver")
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_shared_token_ordering(self):
        base = embed_text("hypodense lesion")
        close = embed_text("hypodense lesion present")
        far = embed_text("hyperenhancing mass")
        assert cosine(base, close) > cosine(base, far)

    def test_norm_is_one_for_random_strings(self):
        rng = np.random.default_rng(0)
        words = ["alpha", "beta", "gamma", "delta", "lesion", "mass", "cystic", "liver"]
        for _ in range(50):
            k = rng.integers(1, 6)
            text = " ".join(rng.choice(words, size=k))
            v = embed_text(text).vector
            assert abs(np.linalg.norm(v) - 1.0) < 1e-6

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            embed_text("")
        with pytest.raises(ValueError):
            embed_text("   ")

    @given(st.permutations(["hypodense", "ill", "defined", "lesion", "liver"]))
    @settings(max_examples=20)
    def test_bag_of_words_order_insensitive(self, tokens):
        reference = embed_text("hypodense ill defined lesion liver")
        permuted = embed_text(" ".join(tokens))
        np.testing.assert_array_equal(reference.vector, permuted.vector)


class TestValidateSimilarity:
    def test_self_similarity_is_one(self):
        score, ok = validate_similarity("a cystic lesion", "a cystic lesion", 0.6)
        assert score == pytest.approx(1.0, abs=1e-12)
        assert ok

    def test_disjoint_tokens_score_near_zero(self):
        score, _ = validate_similarity(
            "wedge resection margin unremarkable spleen",
            "bright exophytic calcified focus kidney",
            0.0,
        )
        assert abs(score) < 0.2

    def test_strict_threshold_boundary(self):
        # pass requires score >= threshold
        score, ok = validate_similarity("alpha beta", "alpha gamma", 0.99)
        assert not ok
        _, ok2 = validate_similarity("alpha beta", "alpha beta", 1.0)
        assert ok2

    def test_threshold_range_checked(self):
        with pytest.raises(ValueError):
            validate_similarity("a", "b", 1.5)


class TestGenerateVariants:
    def _dset(self, terms, organ="liver"):
        return DescriptorSet(
            "rid", organ, tuple(terms), render_frame(terms, organ, 0)
        )

    def test_three_distinct_variants_contain_term(self, client):
        out = generate_variants(self._dset(["hypodense"]), 3, client)
        assert len(out.variants) == 3
        assert len(set(out.variants)) == 3
        assert all("hypodense" in v for v in out.variants)

    def test_single_variant_is_cleaned_text(self, client):
        d = self._dset(["cystic"])
        out = generate_variants(d, 1, client)
        assert out.variants == (d.cleaned_text,)

    def test_hundred_variants(self, client):
        out = generate_variants(self._dset(["hypodense", "ill-defined"]), 100, client)
        assert len(out.variants) == 100
        assert len(set(out.variants)) == 100
        assert all(
            "hypodense" in v and "ill-defined" in v for v in out.variants
        )
        assert all(s >= 0.6 for s in out.similarity_scores)

    def test_every_vocabulary_term_supports_hundred_variants(self, vocab, client):
        for organ in vocab.organs:
            for phrase in vocab.phrases(organ):
                out = generate_variants(self._dset([phrase], organ), 100, client)
                assert len(out.variants) == 100
                assert all(phrase in v for v in out.variants)

    def test_exhaustion_raises(self, client):
        # an impossible threshold leaves only the identity frame passing
        with pytest.raises(GenerationExhaustedError):
            generate_variants(self._dset(["hypodense"]), 3, client, threshold=0.9999)

    def test_empty_terms_rejected(self, client):
        d = DescriptorSet("rid", "liver", (), "", no_match=True)
        with pytest.raises(ValueError):
            generate_variants(d, 1, client)

    def test_mock_determinism_across_clients(self, vocab):
        a = generate_variants(self._dset(["enhancing"]), 10, mock_client(vocab))
        b = generate_variants(self._dset(["enhancing"]), 10, mock_client(vocab))
        assert a.variants == b.variants
        assert a.similarity_scores == b.similarity_scores
