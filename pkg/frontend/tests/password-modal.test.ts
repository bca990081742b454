/**
 * The one-time password contract: the credentials modal shows the
 * temporary password exactly once and it is unrecoverable after the
 * modal is dismissed — not in the DOM, not in any later API response.
 */

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import {
    GOOD_INPUTS,
    STAFF_PASSWORD,
    type TestServer,
    apiCall,
    apiLogin,
    click,
    loginViaUi,
    mountApp,
    q,
    setValue,
    startServer,
    submitForm,
    waitFor,
} from './helpers.js';

let server: TestServer;
let patientId = '';

beforeAll(async () => {
    server = await startServer();
    const coordA = await apiLogin(server.baseUrl, 'coord-a', STAFF_PASSWORD);
    const invA = await apiLogin(server.baseUrl, 'inv-a', STAFF_PASSWORD);
    const record = await apiCall(server.baseUrl, coordA, 'POST', '/api/v1/patients', {
        site_id: server.siteA,
        inputs: GOOD_INPUTS,
    });
    patientId = record['patient_id'] as string;
    await apiCall(server.baseUrl, coordA, 'POST', `/api/v1/patients/${patientId}/consultation`, {
        expected_version: 1,
    });
    await apiCall(server.baseUrl, invA, 'POST', `/api/v1/patients/${patientId}/validation`, {
        expected_version: 2,
        inputs: GOOD_INPUTS,
    });
});

afterAll(async () => {
    await server.stop();
});

describe('one-time password modal', () => {
    it('shows the password once; dismissal makes it unrecoverable', async () => {
        const { root } = mountApp(server.baseUrl);
        await loginViaUi(root, 'coord-a', STAFF_PASSWORD);
        await waitFor(() => q(root, `[data-action="open-${patientId}"]`));
        click(root, `[data-action="open-${patientId}"]`);
        await waitFor(() => q(root, '[data-action="credentials"]'));
        click(root, '[data-action="credentials"]');
        const form = await waitFor(() => q(root, '[data-role="credentials-host"] form'));
        setValue(form, 'username', 'modal-patient');
        submitForm(root, '[data-role="credentials-host"] form');

        const modal = await waitFor(() => q<HTMLElement>(root, '[data-role="credentials-modal"]'));
        const line = q<HTMLElement>(modal, '[data-role="issued-password"]').textContent ?? '';
        const password = line.replace('Temporary password: ', '');
        expect(password.length).toBeGreaterThanOrEqual(10);
        expect(q<HTMLElement>(modal, '[data-role="issued-username"]').textContent).toContain(
            'modal-patient',
        );

        click(root, '[data-action="dismiss-credentials"]');
        // gone from the DOM entirely
        expect(root.querySelector('[data-role="credentials-modal"]')).toBeNull();
        expect(root.innerHTML).not.toContain(password);
        expect(document.body.innerHTML).not.toContain(password);

        // not retrievable through any API the client can reach
        const session = await apiLogin(server.baseUrl, 'coord-a', STAFF_PASSWORD);
        const record = await apiCall(
            server.baseUrl,
            session,
            'GET',
            `/api/v1/patients/${patientId}`,
        );
        expect(JSON.stringify(record)).not.toContain(password);
        const list = await apiCall(server.baseUrl, session, 'GET', '/api/v1/patients');
        expect(JSON.stringify(list)).not.toContain(password);

        // reopening the detail pane shows no modal and no password
        click(root, `[data-action="open-${patientId}"]`);
        await waitFor(() => {
            const state = q<HTMLElement>(root, '[data-role="detail-state"]').textContent ?? '';
            if (!state.includes('CREDENTIALED')) throw new Error(state);
        });
        expect(root.querySelector('[data-role="credentials-modal"]')).toBeNull();
        expect(root.innerHTML).not.toContain(password);

        // and the issued credential actually works for the patient, once
        const login = await fetch(`${server.baseUrl}/api/v1/auth/login`, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify({ username: 'modal-patient', password }),
        });
        expect(login.status).toBe(200);
    });
});
