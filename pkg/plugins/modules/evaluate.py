#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: evaluate
short_description: Score generated tracings against their references
description:
  - Pairs every generated tracing with the test sample whose bias produced it.
  - Computes corpus-level BLEU-1/2/3 from clipped n-gram counts, separately for direction codes and speed codes.
  - Compares the lengths before end-of-sequence with a Wilcoxon signed-rank test and a Pearson correlation.
  - Writes C(reports/<bias>/report.<format>); CSV columns are
    C(model, modality, b1, b2, b3, pearson_r, pearson_p, wilcoxon_w, wilcoxon_p, n) with BLEU scaled by 100.
version_added: "1.0.0"
options:
  bias:
    description:
      - Bias kind whose generated tracings are scored.
    required: true
    type: str
    choices: ['letter', 'letter_writer', 'classifier', 'autoencoder', 'external']
  format:
    description:
      - Report format. Overrides C(eval.format).
    required: false
    type: str
    choices: ['text', 'csv', 'jsonl']
  published:
    description:
      - Append the published full-scale reference values as C(published:<bias>) rows.
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
- name: Score the letter+writer generator as CSV
  cloudkrafter.handwriting.evaluate:
    out: /srv/handwriting/run1
    bias: letter_writer
    format: csv
  register: scores

- debug:
    var: scores.bleu.direction
'''

RETURN = '''
bleu:
  description: BLEU-1/2/3 per modality, scaled by 100
  returned: success
  type: dict
  sample: {"direction": [48.2, 35.1, 24.0], "speed": [51.0, 37.7, 23.9]}
pearson_r:
  description: Correlation of generated and reference lengths
  returned: success
  type: float
pearson_p:
  description: Two-sided p-value of the correlation
  returned: success
  type: float
wilcoxon_w:
  description: Wilcoxon signed-rank statistic of the length differences
  returned: success
  type: float
wilcoxon_p:
  description: Two-sided p-value of the Wilcoxon test
  returned: success
  type: float
n_empty:
  description: Generated tracings that were end-of-sequence only and left out of BLEU
  returned: success
  type: int
path:
  description: Report file
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
        cmd_evaluate,
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

    result = dict(changed=False, bias=module.params['bias'])

    try:
        with module_logging(module):
            config = RunConfig.load(
                module.params['config'],
                build_overrides(
                    seed=module.params['seed'],
                    out=module.params['out'],
                    fmt=module.params['format'],
                    published=module.params['published'],
                )
            )
            if module.check_mode:
                result.update(changed=True, msg="Report would be written (check mode)")
                return module.exit_json(**result)
            _, summary = cmd_evaluate(config, module.params['bias'])
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
