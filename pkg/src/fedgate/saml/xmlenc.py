"""Encrypted SAML assertions, constrained profile.

Key transport is RSA-OAEP (SHA-256), content encryption AES-128-GCM.
As with signatures, exactly this profile is produced and accepted.
"""

from __future__ import annotations

import base64
import os
import xml.etree.ElementTree as ET

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .xmlutil import parse_xml, q, serialize

ALG_AES128_GCM = "http://www.w3.org/2009/xmlenc11#aes128-gcm"
ALG_RSA_OAEP = "http://www.w3.org/2009/xmlenc11#rsa-oaep"

_OAEP = padding.OAEP(
    mgf=padding.MGF1(algorithm=hashes.SHA256()),
    algorithm=hashes.SHA256(),
    label=None,
)


class DecryptionFailed(Exception):
    pass


def encrypt_element(elem: ET.Element, recipient_key: rsa.RSAPublicKey) -> ET.Element:
    """Wrap ``elem`` into an xenc:EncryptedData structure."""
    plaintext = serialize(elem)
    cek = AESGCM.generate_key(bit_length=128)
    iv = os.urandom(12)
    ciphertext = AESGCM(cek).encrypt(iv, plaintext, None)

    encrypted_data = ET.Element(
        q("xenc", "EncryptedData"),
        Type="http://www.w3.org/2001/04/xmlenc#Element",
    )
    ET.SubElement(encrypted_data, q("xenc", "EncryptionMethod"), Algorithm=ALG_AES128_GCM)
    key_info = ET.SubElement(encrypted_data, q("ds", "KeyInfo"))
    encrypted_key = ET.SubElement(key_info, q("xenc", "EncryptedKey"))
    ET.SubElement(encrypted_key, q("xenc", "EncryptionMethod"), Algorithm=ALG_RSA_OAEP)
    ek_cipher_data = ET.SubElement(encrypted_key, q("xenc", "CipherData"))
    ET.SubElement(ek_cipher_data, q("xenc", "CipherValue")).text = base64.b64encode(
        recipient_key.encrypt(cek, _OAEP)
    ).decode()
    cipher_data = ET.SubElement(encrypted_data, q("xenc", "CipherData"))
    ET.SubElement(cipher_data, q("xenc", "CipherValue")).text = base64.b64encode(
        iv + ciphertext
    ).decode()
    return encrypted_data


def decrypt_element(encrypted_data: ET.Element, private_key: rsa.RSAPrivateKey) -> ET.Element:
    """Decrypt an xenc:EncryptedData produced by :func:`encrypt_element`."""
    try:
        method = encrypted_data.find(q("xenc", "EncryptionMethod"))
        if method is None or method.get("Algorithm") != ALG_AES128_GCM:
            raise DecryptionFailed("content-encryption algorithm outside profile")
        encrypted_key = encrypted_data.find(
            f"{q('ds', 'KeyInfo')}/{q('xenc', 'EncryptedKey')}"
        )
        if encrypted_key is None:
            raise DecryptionFailed("missing EncryptedKey")
        ek_method = encrypted_key.find(q("xenc", "EncryptionMethod"))
        if ek_method is None or ek_method.get("Algorithm") != ALG_RSA_OAEP:
            raise DecryptionFailed("key-transport algorithm outside profile")
        wrapped = base64.b64decode(
            encrypted_key.findtext(
                f"{q('xenc', 'CipherData')}/{q('xenc', 'CipherValue')}", ""
            )
        )
        blob = base64.b64decode(
            encrypted_data.findtext(
                f"{q('xenc', 'CipherData')}/{q('xenc', 'CipherValue')}", ""
            )
        )
        cek = private_key.decrypt(wrapped, _OAEP)
        plaintext = AESGCM(cek).decrypt(blob[:12], blob[12:], None)
        return parse_xml(plaintext)
    except DecryptionFailed:
        raise
    except Exception as exc:
        raise DecryptionFailed(str(exc)) from exc
