#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: train_generator
short_description: Train the bias-conditioned tracing generator
description:
  - Trains a stacked GRU generator with teacher forcing on the training split, conditioned on the bias table of O(bias).
  - The bias vector is projected to frame 0 and the model predicts the direction and speed code of every next frame.
  - The checkpoint C(generator/<bias>/checkpoint.hwta) is rewritten after every epoch; per-epoch training and
    validation losses go to C(train_report.yml).
version_added: "1.0.0"
options:
  bias:
    description:
      - Bias kind whose table conditions the generator.
    required: true
    type: str
    choices: ['letter', 'letter_writer', 'classifier', 'autoencoder', 'external']
  epochs:
    description:
      - Number of training epochs. Overrides C(generator.epochs).
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
- name: Train the letter+writer generator for 30 epochs
  cloudkrafter.handwriting.train_generator:
    out: /srv/handwriting/run1
    bias: letter_writer
    epochs: 30
'''

RETURN = '''
epochs:
  description: Epochs trained
  returned: success
  type: int
train_loss:
  description: Mean per-sequence training loss of every epoch
  returned: success
  type: list
  elements: float
validation_loss:
  description: Mean per-sequence validation loss of every epoch, without dropout
  returned: success
  type: list
  elements: float
path:
  description: Generator directory
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
        cmd_train_generator,
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
        epochs=dict(type='int', required=False),
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
                build_overrides(seed=module.params['seed'], out=module.params['out'], epochs=module.params['epochs'])
            )
            if module.check_mode:
                result.update(changed=True, msg="Generator would be trained (check mode)")
                return module.exit_json(**result)
            result.update(cmd_train_generator(config, module.params['bias']))
        result['changed'] = True
        module.exit_json(**result)

    except HandwritingError as e:
        module.fail_json(msg=str(e), error=error_details(e), **result)
    except Exception as e:
        module.fail_json(msg=f"Unexpected error: {e}", error=error_details(e),
                         exception=traceback.format_exc(), **result)


if __name__ == '__main__':
    main()
