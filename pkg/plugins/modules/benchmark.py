#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: benchmark
short_description: Run the full handwriting style benchmark
description:
  - Runs synth, preprocess, and then train_styles, train_generator, generate, evaluate and plot for every bias in O(biases).
  - Writes a combined report with one row per bias and modality to C(reports/benchmark/report.<format>).
  - Same configuration and seed give byte-identical reports.
version_added: "1.0.0"
options:
  biases:
    description:
      - Bias kinds to compare.
    required: false
    type: list
    elements: str
    choices: ['letter', 'letter_writer', 'classifier', 'autoencoder', 'external']
    default: ['letter', 'letter_writer', 'classifier', 'autoencoder']
  skip_synth:
    description:
      - Reuse the corpus already in O(out) instead of writing it again.
    required: false
    type: bool
    default: false
  temperature:
    description:
      - Sampling temperature. Overrides C(generator.temperature).
    required: false
    type: float
  epochs:
    description:
      - Generator training epochs. Overrides C(generator.epochs).
    required: false
    type: int
  format:
    description:
      - Report format. Overrides C(eval.format).
    required: false
    type: str
    choices: ['text', 'csv', 'jsonl']
  published:
    description:
      - Append the published full-scale reference values to the report.
    required: false
    type: bool
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
- name: Compare all four bias kinds at desk scale
  cloudkrafter.handwriting.benchmark:
    out: /srv/handwriting/run1
    seed: 7
    format: csv
    published: true
  register: bench

- name: Quick letter-only smoke run
  cloudkrafter.handwriting.benchmark:
    out: /tmp/smoke
    biases: [letter]
    epochs: 2
'''

RETURN = '''
report:
  description: Combined report file
  returned: success
  type: str
results:
  description: Scores per bias
  returned: success
  type: list
  elements: dict
stages:
  description: Summary of every stage that ran
  returned: success
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
        run_benchmark,
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
        biases=dict(type='list', elements='str', required=False, choices=list(BIAS_CHOICES),
                    default=['letter', 'letter_writer', 'classifier', 'autoencoder']),
        skip_synth=dict(type='bool', required=False, default=False),
        temperature=dict(type='float', required=False),
        epochs=dict(type='int', required=False),
        format=dict(type='str', required=False, choices=['text', 'csv', 'jsonl']),
        published=dict(type='bool', required=False),
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

    result = dict(changed=False, biases=module.params['biases'])

    try:
        with module_logging(module):
            config = RunConfig.load(
                module.params['config'],
                build_overrides(
                    seed=module.params['seed'],
                    out=module.params['out'],
                    temperature=module.params['temperature'],
                    epochs=module.params['epochs'],
                    fmt=module.params['format'],
                    published=module.params['published'],
                )
            )
            if module.check_mode:
                result.update(changed=True, msg="Benchmark would run (check mode)")
                return module.exit_json(**result)
            _, summary = run_benchmark(config, module.params['biases'], skip_synth=module.params['skip_synth'])
        result.update(summary)
        result['changed'] = True
        module.exit_json(**result)

    except HandwritingError as e:
        module.fail_json(msg=str(e), error=error_details(e), **result)
    except Exception as e:
        module.fail_json(msg=f"Unexpected error: {e}", error=error_details(e),
                         exception=traceback.format_exc(), **result)


if __name__ == '__main__':
    main()
