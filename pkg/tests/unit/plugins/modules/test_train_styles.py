#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type

from unittest.mock import MagicMock, patch

import pytest
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    FormatError,
    ModelError,
)
from ansible_collections.cloudkrafter.handwriting.plugins.modules.train_styles import main


MODULE = 'ansible_collections.cloudkrafter.handwriting.plugins.modules.train_styles'


def setup_ansible_module_mock(mock_module, params=None):
    """Helper to setup common AnsibleModule mock attributes"""
    mock_instance = MagicMock()
    mock_module.return_value = mock_instance
    mock_instance.params = dict(
        {'bias': 'letter', 'external_table': None, 'config': None, 'seed': None, 'out': None},
        **(params or {})
    )
    mock_instance.check_mode = False
    mock_instance.exit_json = MagicMock()
    mock_instance.fail_json = MagicMock()
    return mock_instance


class TestTrainStylesModule:
    """Tests for train_styles module"""

    @pytest.mark.parametrize('bias', ['letter', 'letter_writer', 'classifier', 'autoencoder'])
    def test_bias_is_passed(self, bias):
        """Test the requested bias kind reaches cmd_train_styles"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_styles') as mock_train:
            module = setup_ansible_module_mock(mock_module, {'bias': bias})
            mock_train.return_value = {'bias': bias, 'kind': bias, 'dimension': 26, 'entries': 26, 'path': 'p'}
            main()

        assert mock_train.call_args[0][1] == bias
        result = module.exit_json.call_args[1]
        assert result['changed'] is True
        assert result['bias'] == bias

    def test_confusion_matrix_not_returned(self):
        """Test the confusion matrix stays out of the module result"""
        summary = {
            'bias': 'classifier',
            'accuracy': 0.9,
            'confusion': {'letters': ['A'], 'matrix': [[1, 0]]},
            'diagonally_dominant': True,
            'kind': 'classifier',
            'dimension': 64,
            'entries': 10,
            'path': 'out/styles/classifier',
        }
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_styles') as mock_train:
            module = setup_ansible_module_mock(mock_module, {'bias': 'classifier'})
            mock_train.return_value = summary
            main()

        result = module.exit_json.call_args[1]
        assert 'confusion' not in result
        assert result['accuracy'] == 0.9
        assert result['diagonally_dominant'] is True

    def test_external_table_option(self):
        """Test external_table overrides styles.external_table"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_styles') as mock_train:
            setup_ansible_module_mock(mock_module, {'bias': 'external', 'external_table': '/data/table.txt'})
            mock_train.return_value = {}
            main()

        config = mock_train.call_args[0][0]
        assert config.section('styles')['external_table'] == '/data/table.txt'

    def test_check_mode(self):
        """Test check mode does not train"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_styles') as mock_train:
            module = setup_ansible_module_mock(mock_module, {'bias': 'autoencoder'})
            module.check_mode = True
            main()

        mock_train.assert_not_called()
        assert 'autoencoder table would be built' in module.exit_json.call_args[1]['msg']

    @pytest.mark.parametrize('error,category', [
        (FormatError("table.txt is not an embedding table"), 'format'),
        (ModelError("Batchnorm in training mode needs at least 2 samples"), 'model'),
    ])
    def test_errors(self, error, category):
        """Test failures carry their error category"""
        with patch(f'{MODULE}.AnsibleModule') as mock_module, \
                patch(f'{MODULE}.cmd_train_styles') as mock_train:
            module = setup_ansible_module_mock(mock_module, {'bias': 'classifier'})
            mock_train.side_effect = error
            main()

        call_args = module.fail_json.call_args[1]
        assert call_args['msg'] == str(error)
        assert call_args['error']['type'] == category
        assert call_args['bias'] == 'classifier'
