#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: plot
short_description: Draw generated tracings as SVG
description:
  - Decodes tracings with the run's speed quantizer and draws each one as a polyline with an x marking the first point.
  - Also writes C(alphabet.svg), a contact sheet with the first tracing of every letter.
  - Tracings without any content frame cannot be drawn and are skipped with a warning.
version_added: "1.0.0"
options:
  bias:
    description:
      - Plot C(generated/<bias>/tracings.jsonl).
      - One of O(bias) and O(tracings) is required.
    required: false
    type: str
    choices: ['letter', 'letter_writer', 'classifier', 'autoencoder', 'external']
  tracings:
    description:
      - Plot this tracings file. SVGs go to C(plots/<file name>).
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
- name: Plot the letter generator output
  cloudkrafter.handwriting.plot:
    out: /srv/handwriting/run1
    bias: letter
'''

RETURN = '''
plots:
  description: Number of letter SVGs written
  returned: success
  type: int
skipped:
  description: Tracings that could not be drawn
  returned: success
  type: int
path:
  description: Plot directory
  returned: success
  type: str
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
        cmd_plot,
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
        bias=dict(type='str', required=False, choices=list(BIAS_CHOICES)),
        tracings=dict(type='path', required=False),
        config=dict(type='path', required=False),
        seed=dict(type='int', required=False),
        out=dict(type='path', required=False),
    )

    module = AnsibleModule(
        argument_spec=module_args,
        supports_check_mode=True,
        required_one_of=[['bias', 'tracings']],
        mutually_exclusive=[['bias', 'tracings']],
    )

    if not HAS_DEPS:
        module.fail_json(msg=missing_required_lib('numpy, scipy, PyYAML, jsonschema and Jinja2'),
                         exception=DEPS_IMPORT_ERROR)

    result = dict(changed=False)

    try:
        with module_logging(module):
            config = RunConfig.load(
                module.params['config'],
                build_overrides(seed=module.params['seed'], out=module.params['out'])
            )
            if module.check_mode:
                result.update(changed=True, msg="Plots would be written (check mode)")
                return module.exit_json(**result)
            result.update(cmd_plot(config, bias=module.params['bias'], tracings=module.params['tracings']))
        result['changed'] = True
        module.exit_json(**result)

    except HandwritingError as e:
        module.fail_json(msg=str(e), error=error_details(e), **result)
    except Exception as e:
        module.fail_json(msg=f"Unexpected error: {e}", error=error_details(e),
                         exception=traceback.format_exc(), **result)


if __name__ == '__main__':
    main()
