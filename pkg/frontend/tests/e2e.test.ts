/**
 * The full study journey driven through the portal UI against a live
 * service: anonymous self-check, registration, consultation, validation,
 * credential issuance (one-time password), patient first login with
 * forced rotation, the four-form wizard, submission, the coordinator's
 * follow-up view, and the automatic notification.
 */

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import {
    STAFF_PASSWORD,
    type TestServer,
    click,
    fillCriterionInputs,
    loginViaUi,
    mountApp,
    q,
    readMail,
    setValue,
    sleep,
    startServer,
    submitForm,
    waitFor,
} from './helpers.js';

let server: TestServer;

beforeAll(async () => {
    server = await startServer();
});

afterAll(async () => {
    await server.stop();
});

describe('end-to-end enrollment through the portal', () => {
    it('walks a patient from self-check to ENROLLED', async () => {
        const { app, root } = mountApp(server.baseUrl);

        // --- anonymous self-check -----------------------------------------
        await waitFor(() => q(root, '[data-view="self-check"]'));
        fillCriterionInputs(root);
        submitForm(root, '[data-view="self-check"]');
        const verdict = await waitFor(() => q<HTMLElement>(root, '[data-overall]'));
        expect(verdict.dataset['overall']).toBe('ELIGIBLE');
        expect(q<HTMLElement>(root, '.next-steps').textContent).toContain('consultation');
        // per-criterion explanations are rendered
        expect(root.querySelectorAll('[data-criterion]').length).toBeGreaterThanOrEqual(5);

        // --- coordinator registers the prospect ----------------------------
        click(root, '[data-action="go-login"]');
        await loginViaUi(root, 'coord-a', STAFF_PASSWORD);
        await waitFor(() => q(root, '[data-view="dashboard"]'));
        click(root, '[data-action="register-prospect"]');
        const registerForm = await waitFor(() =>
            q(root, '[data-role="register-host"] [data-role="inputs-form"]'),
        );
        fillCriterionInputs(registerForm);
        submitForm(root, '[data-role="register-host"] [data-role="inputs-form"]');
        const row = await waitFor(() => q<HTMLElement>(root, '[data-patient-row]'));
        const patientId = row.dataset['patientRow'] as string;
        expect(q<HTMLElement>(row, '[data-role="state"]').textContent).toBe('SELF_SCREENED');

        // --- consultation ---------------------------------------------------
        click(root, `[data-action="open-${patientId}"]`);
        await waitFor(() => q(root, '[data-role="detail-state"]'));
        click(root, '[data-action="consultation"]');
        await waitFor(() => {
            const state = q<HTMLElement>(root, '[data-role="detail-state"]').textContent ?? '';
            if (!state.includes('CONSULTED')) throw new Error(`state: ${state}`);
        });

        // --- investigator validates ------------------------------------------
        click(root, '[data-nav="logout"]');
        await loginViaUi(root, 'inv-a', STAFF_PASSWORD);
        await waitFor(() => q(root, '[data-view="dashboard"]'));
        await waitFor(() => q(root, `[data-action="open-${patientId}"]`));
        click(root, `[data-action="open-${patientId}"]`);
        await waitFor(() => q(root, '[data-action="validation"]'));
        click(root, '[data-action="validation"]');
        const validationForm = await waitFor(() =>
            q(root, '[data-role="validation-host"] [data-role="inputs-form"]'),
        );
        fillCriterionInputs(validationForm);
        submitForm(root, '[data-role="validation-host"] [data-role="inputs-form"]');
        await waitFor(() => {
            const state = q<HTMLElement>(root, '[data-role="detail-state"]').textContent ?? '';
            if (!state.includes('PHYSICIAN_VALIDATED')) throw new Error(`state: ${state}`);
        });

        // --- coordinator issues credentials ----------------------------------
        click(root, '[data-nav="logout"]');
        await loginViaUi(root, 'coord-a', STAFF_PASSWORD);
        await waitFor(() => q(root, `[data-action="open-${patientId}"]`));
        click(root, `[data-action="open-${patientId}"]`);
        await waitFor(() => q(root, '[data-action="credentials"]'));
        click(root, '[data-action="credentials"]');
        const credForm = await waitFor(() => q(root, '[data-role="credentials-host"] form'));
        setValue(credForm, 'username', 'e2e-patient');
        submitForm(root, '[data-role="credentials-host"] form');
        const passwordLine = await waitFor(() =>
            q<HTMLElement>(root, '[data-role="issued-password"]'),
        );
        const tempPassword = (passwordLine.textContent ?? '').replace(
            'Temporary password: ',
            '',
        );
        expect(tempPassword.length).toBeGreaterThanOrEqual(10);
        click(root, '[data-action="dismiss-credentials"]');

        // --- patient first login: forced rotation -----------------------------
        click(root, '[data-nav="logout"]');
        await loginViaUi(root, 'e2e-patient', tempPassword);
        await waitFor(() => q(root, '[data-view="change-password"]'));
        expect(app.state.activeView).toBe('CHANGE_PASSWORD');
        setValue(root, 'old_password', tempPassword);
        setValue(root, 'new_password', 'patient-portal-pw-9');
        submitForm(root, '[data-view="change-password"]');

        // --- the wizard: four schema-driven pages ------------------------------
        await waitFor(() => q(root, '[data-form-page="DEMOGRAPHICS"]'));
        setValue(root, 'full_name', 'End ToEnd');
        setValue(root, 'date_of_birth', '1951-12-01');
        submitForm(root, '[data-form-page="DEMOGRAPHICS"]');

        await waitFor(() => q(root, '[data-form-page="PSA_HISTORY"]'));
        setValue(root, 'latest_psa_ng_ml', '5.1');
        setValue(root, 'latest_psa_date', '2026-07-02');
        submitForm(root, '[data-form-page="PSA_HISTORY"]');

        await waitFor(() => q(root, '[data-form-page="BIOPSY"]'));
        setValue(root, 'biopsy_date', '2026-06-20');
        setValue(root, 'gleason_score', '6');
        setValue(root, 'positive_cores', '2');
        setValue(root, 'total_cores', '12');
        setValue(root, 'histology_aggressive', 'NO');
        submitForm(root, '[data-form-page="BIOPSY"]');

        await waitFor(() => q(root, '[data-form-page="DRE"]'));
        setValue(root, 'exam_date', '2026-06-01');
        setValue(root, 'tumor_palpable', 'NO');
        submitForm(root, '[data-form-page="DRE"]');

        // --- review and submit ---------------------------------------------------
        await waitFor(() => q(root, '[data-action="submit-enrollment"]'));
        for (const form of ['DEMOGRAPHICS', 'PSA_HISTORY', 'BIOPSY', 'DRE']) {
            const item = q<HTMLElement>(root, `[data-review-form="${form}"]`);
            expect(item.dataset['status']).toBe('COMPLETE');
        }
        const submitButton = q<HTMLButtonElement>(root, '[data-action="submit-enrollment"]');
        expect(submitButton.disabled).toBe(false);
        submitButton.click();
        await waitFor(() => q(root, '[data-role="enrolled"]'));
        expect(q<HTMLElement>(root, '[data-role="enrolled-state"]').textContent).toContain(
            'ENROLLED',
        );

        // --- the automatic coordinator email leaves the outbox ---------------------
        await waitFor(() => {
            const mail = readMail(server.mailPath);
            if (mail.length !== 1) throw new Error(`mail count ${mail.length}`);
            return mail;
        }, 20_000);
        const mail = readMail(server.mailPath);
        expect(mail[0]['recipient']).toBe('coord-a@example.org');
        expect(mail[0]['template']).toBe('ENROLLMENT_SUBMITTED');

        // --- coordinator sees the enrolled patient --------------------------------
        click(root, '[data-nav="logout"]');
        await loginViaUi(root, 'coord-a', STAFF_PASSWORD);
        await waitFor(() => q(root, '[data-view="dashboard"]'));
        const filter = await waitFor(() => q<HTMLSelectElement>(root, '[data-role="state-filter"]'));
        filter.value = 'ENROLLED';
        filter.dispatchEvent(new window.Event('change', { bubbles: true }));
        await waitFor(() => {
            const rows = root.querySelectorAll('[data-patient-row]');
            if (rows.length !== 1) throw new Error(`rows ${rows.length}`);
            const state = rows[0].querySelector('[data-role="state"]')?.textContent;
            if (state !== 'ENROLLED') throw new Error(`state ${state}`);
        });

        // the client never persisted a secret or token
        expect(window.localStorage.length).toBe(0);
        expect(window.sessionStorage.length).toBe(0);
        expect(document.cookie).toBe('');
    });

    it('self-check failure renders the failed criterion highlighted', async () => {
        const { root } = mountApp(server.baseUrl);
        await waitFor(() => q(root, '[data-view="self-check"]'));
        fillCriterionInputs(root);
        setValue(root, 'dre_palpable', 'YES');
        submitForm(root, '[data-view="self-check"]');
        const verdict = await waitFor(() => q<HTMLElement>(root, '[data-overall]'));
        expect(verdict.dataset['overall']).toBe('INELIGIBLE');
        const failed = q<HTMLElement>(root, '[data-criterion="non_palpable_dre"]');
        expect(failed.dataset['passed']).toBe('false');
        expect(failed.textContent).toContain('rectal examination');
    });

    it('client-side validation blocks bad self-check input before the wire', async () => {
        const { root } = mountApp(server.baseUrl);
        await waitFor(() => q(root, '[data-view="self-check"]'));
        setValue(root, 'dre_palpable', 'NO');
        setValue(root, 'histology_aggressive', 'NO');
        setValue(root, 'gleason_score', '14'); // out of range
        setValue(root, 'psa_ng_ml', '-1');
        setValue(root, 'positive_cores', '9');
        setValue(root, 'total_cores', '6'); // fewer than positive
        submitForm(root, '[data-view="self-check"]');
        await sleep(100);
        expect(root.querySelector('[data-overall]')).toBeNull(); // nothing sent
        expect(
            q<HTMLElement>(root, '[data-error-for="gleason_score"]').textContent,
        ).toContain('between 2 and 10');
        expect(q<HTMLElement>(root, '[data-error-for="psa_ng_ml"]').textContent).toContain(
            'non-negative',
        );
        expect(
            q<HTMLElement>(root, '[data-error-for="positive_cores"]').textContent,
        ).toContain('exceed');
    });
});
