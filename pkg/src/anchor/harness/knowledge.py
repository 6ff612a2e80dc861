"""Dolev-Yao adversary knowledge over concrete protocol terms.

Terms are the actual byte strings of a run (perfect-crypto assumption: the
adversary never guesses a key, it only applies protocol operations with keys
it already holds). The closure is recomputed to a fixpoint after every
observation:

* split: frames into header fields and payload fields, tickets into fields;
* decrypt: sealed blobs under any known key;
* derive: session material (iDVV chains, MAC keys, ratchets) from known keys.

MACing with known keys is open-ended, so it is exposed through
:meth:`Knowledge.mac_keys` and applied on demand when forging frames.
"""
from __future__ import annotations

from itertools import product
from typing import Iterable

from ..crypto import mac, open_blob
from ..errors import AnchorError
from ..idvv import idvv_derive, idvv_next
from ..protocol import (AssociationTicket, MsgType, Role, decode_envelope, derive_session, ratchet,
                        unpack_fields)
from ..protocol.handshake import _ctrl_binding

# bounds that keep the derive closure finite
MAX_EPOCHS = 2
MAX_CHAIN = 4

_FIELDS = {
    MsgType.REG_INIT: ("id", "nonce"),
    MsgType.REG_REPLY: ("nonce", "mac"),
    MsgType.ASSOC_REQ: ("id", "id", "nonce"),
    MsgType.ASSOC_GRANT: ("blob", "ticket"),
    MsgType.ASSOC_DELIVER: ("ticket", "nonce", "mac"),
    MsgType.ASSOC_ACCEPT: ("mac",),
    MsgType.ASSOC_CONFIRM: ("mac",),
}


class Knowledge:
    def __init__(self, keys: Iterable[bytes] = (), frames: Iterable[bytes] = ()):
        self.frames: list[bytes] = []
        self.keys: set[bytes] = set(keys)
        self.derived: set[bytes] = set()
        self.terms: set[tuple[str, bytes]] = set()
        # (blob, associated data) pairs awaiting a key
        self.blobs: set[tuple[bytes, bytes]] = set()
        self._derived_from: set[tuple] = set()
        self._split_upto = 0
        for f in frames:
            self.frames.append(bytes(f))
        self.close()

    def copy(self) -> "Knowledge":
        k = Knowledge.__new__(Knowledge)
        k.frames = list(self.frames)
        k.keys = set(self.keys)
        k.derived = set(self.derived)
        k.terms = set(self.terms)
        k.blobs = set(self.blobs)
        k._derived_from = set(self._derived_from)
        k._split_upto = self._split_upto
        return k

    def snapshot(self) -> tuple:
        return (frozenset(self.frames), frozenset(self.keys), frozenset(self.derived),
                frozenset(self.terms), frozenset(self.blobs))

    def __contains__(self, value: bytes) -> bool:
        return value in self.keys or value in self.derived or any(v == value for _, v in self.terms)

    def observe(self, frame: bytes) -> None:
        self.frames.append(bytes(frame))
        self.close()

    def learn_key(self, key: bytes) -> None:
        self.keys.add(bytes(key))
        self.close()

    def of_kind(self, kind: str) -> list[bytes]:
        return sorted(v for k, v in self.terms if k == kind)

    def mac_keys(self) -> list[bytes]:
        return sorted(self.keys | self.derived)

    # -- closure ------------------------------------------------------------

    def close(self) -> None:
        while True:
            before = (len(self.terms), len(self.keys), len(self.derived), len(self.blobs))
            for f in self.frames[self._split_upto:]:
                self._split(f)
            self._split_upto = len(self.frames)
            if not self.keys:
                return
            self._decrypt()
            self._derive()
            if before == (len(self.terms), len(self.keys), len(self.derived), len(self.blobs)):
                return

    def _add(self, kind: str, value: bytes) -> None:
        self.terms.add((kind, value))

    def _split(self, raw: bytes) -> None:
        try:
            env = decode_envelope(raw)
        except AnchorError:
            self._add("bytes", raw)
            return
        self._add("sid", env.session_id)
        self._add("mac", env.mac)
        self._add("payload", env.payload)
        kinds = _FIELDS.get(env.msg_type)
        if kinds is None:
            return
        self._add("nonce", env.session_id)  # handshake frames carry a nonce as session id
        try:
            fields = unpack_fields(env.payload, len(kinds))
        except AnchorError:
            return
        for kind, value in zip(kinds, fields):
            self._add(kind, value)
        if env.msg_type == MsgType.ASSOC_GRANT:
            self._split_ticket(fields[1], env.session_id)
            try:
                t = AssociationTicket.decode(fields[1])
                self.blobs.add((fields[0], _ctrl_binding(t.controller_id, t.device_id, env.session_id)))
            except (AnchorError, ValueError):
                pass
        elif env.msg_type == MsgType.ASSOC_DELIVER:
            self._split_ticket(fields[0], env.session_id)

    def _split_ticket(self, raw: bytes, n1: bytes) -> None:
        try:
            t = AssociationTicket.decode(raw)
        except (AnchorError, ValueError):
            return
        self._add("id", t.device_id.encode())
        self._add("id", t.controller_id.encode())
        self._add("nonce", t.anchor_nonce)
        self._add("sealed", t.k_cd_sealed)
        self.blobs.add((t.k_cd_sealed, t.binding(n1)))

    def _decrypt(self) -> None:
        for (blob, ad), key in product(list(self.blobs), list(self.keys)):
            try:
                self.keys.add(open_blob(key, blob, ad))
            except AnchorError:
                pass

    def _derive(self) -> None:
        nonces = self.of_kind("nonce")
        for key in list(self.keys):
            for n1, n2 in product(nonces, nonces):
                tag = (key, n1, n2)
                if tag in self._derived_from:
                    continue
                self._derived_from.add(tag)
                self.derived.add(mac(key, b"\x30", n1, n2))  # registration key from an OTK
                s = derive_session(key, n1, n2, Role.CONTROLLER)
                s.established = True
                for epoch in range(MAX_EPOCHS + 1):
                    self.derived.add(bytes(s.k_session))
                    self._add("sid", s.session_id)
                    for chain in (s.send_idvv, s.recv_idvv):
                        for _ in range(MAX_CHAIN):
                            self.derived.add(idvv_derive(chain, "mac"))
                            self.derived.add(idvv_derive(chain, "enc"))
                            _, chain = idvv_next(chain)
                    if epoch < MAX_EPOCHS:
                        ratchet(s)
