#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


DOCUMENTATION = '''
---
module: preprocess
short_description: Clean, split and encode the corpus of a benchmark run
description:
  - Drops tracings with more than C(clean.max_steps) displacements or lasting longer than C(clean.max_duration) seconds.
  - Rasterizes every tracing to a 28x28 image and tags samples as train, validation or test, stratified by letter.
  - Fits 16 equal-mass speed bins on the training split and encodes every tracing as direction and speed codes.
  - Writes C(preprocess/encoded.jsonl), C(rasters.hwta), C(quantizer.txt) and C(clean_report.yml) below O(out).
version_added: "1.0.0"
options:
  config:
    description:
      - Run configuration YAML file.
    required: false
    type: path
  seed:
    description:
      - Global seed. Must match the seed the corpus was written with.
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
- name: Encode the corpus
  cloudkrafter.handwriting.preprocess:
    out: /srv/handwriting/run1
    seed: 7
  register: encoded

- debug:
    var: encoded.split
'''

RETURN = '''
samples:
  description: Number of encoded samples
  returned: success
  type: int
dropped:
  description: Dropped tracings per reason
  returned: success
  type: dict
  sample: {"too_many_steps": 3, "too_long": 0}
split:
  description: Samples per split
  returned: success
  type: dict
  sample: {"train": 800, "validation": 100, "test": 100}
path:
  description: Preprocess directory
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
        RunConfig,
        build_overrides,
        cmd_preprocess,
    )
    HAS_DEPS = True
    DEPS_IMPORT_ERROR = None
except ImportError:
    HAS_DEPS = False
    DEPS_IMPORT_ERROR = traceback.format_exc()


def main():
    """Main entry point."""
    module_args = dict(
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

    result = dict(changed=False)

    try:
        with module_logging(module):
            config = RunConfig.load(
                module.params['config'],
                build_overrides(seed=module.params['seed'], out=module.params['out'])
            )
            if module.check_mode:
                result.update(changed=True, msg="Corpus would be encoded (check mode)")
                return module.exit_json(**result)
            result.update(cmd_preprocess(config))
        result['changed'] = True
        module.exit_json(**result)

    except HandwritingError as e:
        module.fail_json(msg=str(e), error=error_details(e), **result)
    except Exception as e:
        module.fail_json(msg=f"Unexpected error: {e}", error=error_details(e),
                         exception=traceback.format_exc(), **result)


if __name__ == '__main__':
    main()
