import json
import logging
from pathlib import Path

import numpy as np

from Certmpc.exceptions import ContractViolationError
from .networks import Certificate, Mlp, Policy

logger = logging.getLogger(__name__)

PARAMS_VERSION = 1


def network_payload(net):
    """Serialize an Mlp as layer sizes plus row-major weight lists"""
    return {
        'sizes': net.sizes,
        'weights': [w.tolist() for w in net.weights],
        'biases': [b.tolist() for b in net.biases],
    }


def network_from_payload(payload):
    try:
        return Mlp(payload['sizes'], payload['weights'], payload['biases'])
    except (KeyError, TypeError, ValueError) as exc:
        raise ContractViolationError('malformed network parameters', details={'reason': str(exc)})


def certificate_payload(cert):
    return {
        'version': PARAMS_VERSION,
        'kind': 'certificate',
        'output_dim': cert.net.output_size,
        'level': cert.level,
        **network_payload(cert.net),
    }


def policy_payload(policy):
    return {
        'version': PARAMS_VERSION,
        'kind': 'policy',
        'input_lower': policy.lower.tolist(),
        'input_upper': policy.upper.tolist(),
        **network_payload(policy.net),
    }


def save_params(path, model):
    """Write a certificate or policy to a versioned JSON file"""
    payload = certificate_payload(model) if isinstance(model, Certificate) else policy_payload(model)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload))
    logger.debug('Saved %s parameters to %s', payload['kind'], path)
    return path


def load_params(path, expected_kind=None):
    """Read a certificate or policy written by ``save_params``, validating shapes"""
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractViolationError(f'cannot read parameters from {path}', details={'reason': str(exc)})

    if payload.get('version') != PARAMS_VERSION:
        raise ContractViolationError(
            'unsupported parameter file version',
            details={'path': str(path), 'version': payload.get('version')}
        )
    kind = payload.get('kind')
    if expected_kind and kind != expected_kind:
        raise ContractViolationError(
            f'expected {expected_kind} parameters, found {kind}',
            details={'path': str(path)}
        )

    net = network_from_payload(payload)
    if kind == 'certificate':
        if payload.get('output_dim') != net.output_size:
            raise ContractViolationError('output dimension does not match the stored layers')
        return Certificate(net, payload['level'])
    if kind == 'policy':
        return Policy(net, np.asarray(payload['input_lower']), np.asarray(payload['input_upper']))
    raise ContractViolationError(f'unknown parameter kind {kind}', details={'path': str(path)})
