import pytest

from gictime.crypto import CountingPrimitives, Signer, truncate_bits


def test_truncation_keeps_high_order_bytes():
    assert truncate_bits(bytes(range(32)), 32) == bytes([0, 1, 2, 3])


@pytest.mark.parametrize("bits", [0, 7, 12, 264])
def test_truncation_rejects_bad_lengths(bits):
    with pytest.raises(ValueError):
        truncate_bits(bytes(32), bits)


def test_seeded_signer_is_deterministic():
    a, b = Signer.from_seed("provider"), Signer.from_seed(b"provider")
    assert a.verifier == b.verifier
    assert a.sign(b"x") == b.sign(b"x")
    assert Signer.from_seed("other").verifier != a.verifier


def test_signature_verifies_only_untampered_data():
    signer = Signer.generate()
    sig = signer.sign(b"payload")
    assert signer.verifier.verify(sig, b"payload")
    assert not signer.verifier.verify(sig, b"payloae")
    assert not signer.verifier.verify(sig[:-1] + bytes([sig[-1] ^ 1]), b"payload")
    assert not Signer.generate().verifier.verify(sig, b"payload")


def test_counting_primitives():
    prims = CountingPrimitives()
    prims.hash(b"a")
    prims.mac(b"k", b"m")
    prims.mac(b"k", b"m")
    assert (prims.hash_calls, prims.mac_calls) == (1, 2)
