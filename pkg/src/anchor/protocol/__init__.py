"""Wire codec, handshake state machines and session sealing."""
from .envelope import (FLAG_ENCRYPTED, HEADER_SIZE, MAC_SIZE, OVERHEAD, Envelope, MsgType,
                       decode_envelope, encode_envelope, pack_fields, unpack_fields)
from .handshake import (MUTANTS, NO_MAC_ON_A1, REUSED_NONCE, AnchorContext, AssociationTicket,
                        HandshakeState, Phase, Principal, assoc_accept, assoc_complete, assoc_confirm,
                        assoc_deliver, assoc_grant, assoc_request, associate, device_listen,
                        recover, reg_finalize, reg_initiate, reg_respond, register)
from .session import (NO_COUNTER_CHECK, Role, SessionKeys, close, derive_session, open_envelope,
                      ratchet, request_ratchet, seal)

__all__ = [
    "FLAG_ENCRYPTED", "HEADER_SIZE", "MAC_SIZE", "MUTANTS", "NO_COUNTER_CHECK", "NO_MAC_ON_A1",
    "OVERHEAD", "REUSED_NONCE", "AnchorContext", "AssociationTicket", "Envelope", "HandshakeState",
    "MsgType", "Phase", "Principal", "Role", "SessionKeys", "assoc_accept", "assoc_complete",
    "assoc_confirm", "assoc_deliver", "assoc_grant", "assoc_request", "associate", "close",
    "decode_envelope", "derive_session", "device_listen", "encode_envelope", "open_envelope",
    "pack_fields", "ratchet", "recover", "reg_finalize", "reg_initiate", "reg_respond", "register",
    "request_ratchet", "seal", "unpack_fields",
]
