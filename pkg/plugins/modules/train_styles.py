#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: train_styles
short_description: Build the bias table of one bias kind
description:
  - C(letter) writes a 26-dim one-hot per letter.
  - C(letter_writer) writes a letter one-hot followed by a writer one-hot for every letter and writer.
  - C(classifier) trains a small convolutional letter classifier on the training rasters and stores the
    activations of its embedding layer for every sample. Accuracy and confusion matrix on the test split are reported.
  - C(autoencoder) trains a dense raster autoencoder and stores the 34-dim latent code of every sample.
  - C(external) validates and copies the table named by O(external_table).
  - Writes C(styles/<bias>/table.txt) (and C(model.hwta) for the image biases) below O(out).
version_added: "1.0.0"
options:
  bias:
    description:
      - Bias kind to build.
    required: true
    type: str
    choices: ['letter', 'letter_writer', 'classifier', 'autoencoder', 'external']
  external_table:
    description:
      - Embedding table file for the C(external) bias. Overrides C(styles.external_table).
    required: false
    type: path
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
- name: Train the raster classifier and extract embeddings
  cloudkrafter.handwriting.train_styles:
    out: /srv/handwriting/run1
    bias: classifier
  register: classifier

- name: Use embeddings computed elsewhere
  cloudkrafter.handwriting.train_styles:
    out: /srv/handwriting/run1
    bias: external
    external_table: /srv/data/embeddings.txt
'''

RETURN = '''
kind:
  description: Table kind
  returned: success
  type: str
  sample: classifier_embedding
dimension:
  description: Bias vector width
  returned: success
  type: int
  sample: 64
entries:
  description: Number of table entries
  returned: success
  type: int
accuracy:
  description: Held-out classifier accuracy
  returned: when bias is classifier
  type: float
  sample: 0.94
path:
  description: Style directory
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
        cmd_train_styles,
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
        external_table=dict(type='path', required=False),
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
                    external_table=module.params['external_table'],
                )
            )
            if module.check_mode:
                result.update(changed=True, msg=f"The {module.params['bias']} table would be built (check mode)")
                return module.exit_json(**result)
            summary = cmd_train_styles(config, module.params['bias'])
        # the confusion matrix stays in style_report.yml
        summary.pop('confusion', None)
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
