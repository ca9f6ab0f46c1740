#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: generate
short_description: Sample letter tracings from a trained generator
description:
  - Loads C(generator/<bias>/checkpoint.hwta) and samples tracings by tempered softmax sampling until the
    direction block emits end-of-sequence or 99 frames were produced.
  - Without O(keys) every test-split sample is used as a reference and biased with its own table entry.
  - Every tracing is drawn from its own seeded random stream, so repeated runs write identical files.
  - Writes C(generated/<bias>/tracings.jsonl) with direction codes, speed codes, bias key and seed per line.
version_added: "1.0.0"
options:
  bias:
    description:
      - Bias kind of the generator to sample from.
    required: true
    type: str
    choices: ['letter', 'letter_writer', 'classifier', 'autoencoder', 'external']
  temperature:
    description:
      - Sampling temperature. Overrides C(generator.temperature).
      - Values below 1e-6 decode greedily.
    required: false
    type: float
  keys:
    description:
      - Bias table keys to sample, such as C(A), C(A/w003) or a sample id.
    required: false
    type: list
    elements: str
  count:
    description:
      - Tracings per key or reference. Defaults to C(eval.samples_per_reference).
    required: false
    type: int
  config:
    description:
      - Run configuration YAML file.
    required: false
    type: path
  seed:
    description:
      - Global seed.
    required: false
    type: int
  out:
    description:
      - Output directory of the run.
    required: false
    type: path
author:
  - "Brian Veltman (@cloudkrafter)"
'''

EXAMPLES = '''
- name: Generate one tracing per test reference
  cloudkrafter.handwriting.generate:
    out: /srv/handwriting/run1
    bias: letter

- name: Greedy decoding of three letters for one writer
  cloudkrafter.handwriting.generate:
    out: /srv/handwriting/run1
    bias: letter_writer
    temperature: 0.0000001
    keys:
      - A/w003
      - B/w003
      - C/w003
'''

RETURN = '''
tracings:
  description: Number of tracings written
  returned: success
  type: int
empty:
  description: Number of tracings that ended at the first frame
  returned: success
  type: int
path:
  description: Generated tracings directory
  returned: success
  type: str
error:
  description: Error category and exception type when the module fails
  returned: failure
  type: dict
'''

import traceback

from ansible.module_utils.basic import AnsibleModule, missing_required_lib

try:
    from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
        HandwritingError,
        error_details,
        module_logging,
    )
    from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.pipeline import (
        BIAS_CHOICES,
        RunConfig,
        build_overrides,
        cmd_generate,
    )
    HAS_DEPS = True
    DEPS_IMPORT_ERROR = None
except ImportError:
    BIAS_CHOICES = ('letter', 'letter_writer', 'classifier', 'autoencoder', 'external')
    HAS_DEPS = False
    DEPS_IMPORT_ERROR = traceback.format_exc()


def main():
    """Main entry point."""
    module_args = dict(
        bias=dict(type='str', required=True, choices=list(BIAS_CHOICES)),
        temperature=dict(type='float', required=False),
        keys=dict(type='list', elements='str', required=False),
        count=dict(type='int', required=False),
        config=dict(type='path', required=False),
        seed=dict(type='int', required=False),
        out=dict(type='path', required=False),
    )

    module = AnsibleModule(
        argument_spec=module_args,
        supports_check_mode=True
    )

    if not HAS_DEPS:
        module.fail_json(msg=missing_required_lib('numpy, scipy, PyYAML, jsonschema and Jinja2'),
                         exception=DEPS_IMPORT_ERROR)

    result = dict(changed=False, bias=module.params['bias'])

    if module.params['count'] is not None and module.params['count'] < 1:
        module.fail_json(msg="count must be at least 1", error={'type': 'config', 'details': 'ConfigError'}, **result)

    try:
        with module_logging(module):
            config = RunConfig.load(
                module.params['config'],
                build_overrides(
                    seed=module.params['seed'],
                    out=module.params['out'],
                    temperature=module.params['temperature'],
                )
            )
            if module.check_mode:
                result.update(changed=True, msg="Tracings would be generated (check mode)")
                return module.exit_json(**result)
            result.update(cmd_generate(
                config,
                module.params['bias'],
                keys=module.params['keys'],
                count=module.params['count'],
            ))
        result['changed'] = True
        module.exit_json(**result)

    except HandwritingError as e:
        module.fail_json(msg=str(e), error=error_details(e), **result)
    except Exception as e:
        module.fail_json(msg=f"Unexpected error: {e}", error=error_details(e),
                         exception=traceback.format_exc(), **result)


if __name__ == '__main__':
    main()
