/**
 * Coordinator / investigator dashboard: the site's patient list with
 * workflow actions. Every button maps to exactly one API call; the list
 * and detail panes re-fetch after each action so the screen always shows
 * server state. Cross-site content never appears because the API only
 * returns own-site data to site-scoped sessions; 403/404 responses render
 * as "not available for your site".
 *
 * The one-time password from credential issuance is shown in a modal
 * exactly once; dismissing the modal discards the only copy the client
 * ever had.
 */

import { AccountInfo, ApiClient, ApiError, CriterionInputs, PatientRecord } from '../api.js';
import { clear, h } from '../dom.js';
import { FIELD_LABELS, SelfCheckFields, toInputs, validateSelfCheck } from './selfCheck.js';

const STATES = [
    'SELF_SCREENED',
    'CONSULTED',
    'PHYSICIAN_VALIDATED',
    'CREDENTIALED',
    'ENROLLMENT_IN_PROGRESS',
    'ENROLLED',
    'INELIGIBLE',
    'WITHDRAWN',
];

function notAvailable(err: unknown): string {
    if (err instanceof ApiError && (err.status === 403 || err.status === 404)) {
        return 'Not available for your site.';
    }
    if (err instanceof ApiError) return err.body.message;
    return 'The service could not be reached.';
}

function inputsForm(onSubmit: (inputs: CriterionInputs) => void, legend: string): HTMLElement {
    const form = h('form', { 'data-role': 'inputs-form' });
    const errorFor = new Map<string, HTMLElement>();
    for (const [name, label, kind] of FIELD_LABELS) {
        const errorEl = h('span', { class: 'field-error', 'data-error-for': name });
        errorFor.set(name, errorEl);
        const input =
            kind === 'yesno'
                ? h(
                      'select',
                      { name },
                      h('option', { value: '' }, 'Select...'),
                      h('option', { value: 'NO' }, 'No'),
                      h('option', { value: 'YES' }, 'Yes'),
                  )
                : h('input', { name, type: 'text', inputmode: 'decimal' });
        form.append(h('label', { class: 'field', 'data-field': name }, label, input, errorEl));
    }
    form.append(h('button', { type: 'submit' }, legend));
    form.addEventListener('submit', (event) => {
        event.preventDefault();
        const data = new FormData(form);
        const get = (name: string) => String(data.get(name) ?? '');
        const fields: SelfCheckFields = {
            dre_palpable: get('dre_palpable'),
            histology_aggressive: get('histology_aggressive'),
            gleason_score: get('gleason_score'),
            psa_ng_ml: get('psa_ng_ml'),
            positive_cores: get('positive_cores'),
            total_cores: get('total_cores'),
        };
        const errors = validateSelfCheck(fields);
        for (const [name, el] of errorFor) el.textContent = errors.get(name) ?? '';
        if (errors.size === 0) onSubmit(toInputs(fields));
    });
    return form;
}

export function renderDashboard(
    container: HTMLElement,
    api: ApiClient,
    account: AccountInfo,
    onLoggedOut: () => void,
): void {
    clear(container);
    const root = h('div', { 'data-view': 'dashboard' });
    container.append(root);

    let stateFilter = '';
    let selected: PatientRecord | null = null;
    const messages = h('div', { 'data-role': 'dashboard-messages' });
    const listPane = h('section', { 'data-role': 'patient-list' });
    const detailPane = h('section', { 'data-role': 'patient-detail' });
    const registerPane = h('section', { 'data-role': 'register-pane' });
    const modalHost = h('div', { 'data-role': 'modal-host' });

    function say(text: string): void {
        clear(messages);
        if (text) messages.append(h('div', { class: 'banner' }, text));
    }

    async function refresh(): Promise<void> {
        try {
            const result = await api.listPatients(stateFilter || undefined);
            drawList(result.patients);
            if (selected) {
                try {
                    selected = await api.getPatient(selected.patient_id);
                } catch {
                    selected = null;
                }
            }
            drawDetail();
        } catch (err) {
            if (err instanceof ApiError && err.status === 401) {
                onLoggedOut();
                return;
            }
            say(notAvailable(err));
        }
    }

    function drawList(patients: PatientRecord[]): void {
        clear(listPane);
        const filter = h('select', { 'data-role': 'state-filter' }, h('option', { value: '' }, 'All states'));
        for (const state of STATES) {
            const attrs: Record<string, string | boolean> = { value: state };
            if (state === stateFilter) attrs['selected'] = true;
            filter.append(h('option', attrs, state));
        }
        filter.addEventListener('change', () => {
            stateFilter = (filter as HTMLSelectElement).value;
            void refresh();
        });
        const table = h('table', { 'data-role': 'patient-table' });
        const body = h('tbody');
        for (const patient of patients) {
            const row = h(
                'tr',
                { 'data-patient-row': patient.patient_id, 'data-site': patient.site_id },
                h('td', {}, patient.patient_id),
                h('td', { 'data-role': 'state' }, patient.workflow_state),
                h('td', {}, `v${patient.state_version}`),
                h(
                    'td',
                    {},
                    h(
                        'button',
                        {
                            type: 'button',
                            'data-action': `open-${patient.patient_id}`,
                            onclick: () => {
                                void api
                                    .getPatient(patient.patient_id)
                                    .then((record) => {
                                        selected = record;
                                        drawDetail();
                                    })
                                    .catch((err) => say(notAvailable(err)));
                            },
                        },
                        'Open',
                    ),
                ),
            );
            body.append(row);
        }
        table.append(
            h(
                'thead',
                {},
                h('tr', {}, h('th', {}, 'Patient'), h('th', {}, 'State'), h('th', {}, 'Version'), h('th', {}, '')),
            ),
            body,
        );
        listPane.append(
            h('h2', {}, `Patients at your site (${patients.length})`),
            h('label', {}, 'Filter by state ', filter),
            patients.length ? table : h('p', { 'data-role': 'empty-list' }, 'No patients match.'),
        );
    }

    function showOneTimePassword(username: string, password: string): void {
        clear(modalHost);
        let secret: string | null = password;
        const modal = h(
            'div',
            { class: 'modal', 'data-role': 'credentials-modal', role: 'dialog' },
            h('h3', {}, 'Credentials issued'),
            h(
                'p',
                {},
                'Record this temporary password now. For the patient’s safety it is shown only once and cannot be retrieved again.',
            ),
            h('p', { 'data-role': 'issued-username' }, `Username: ${username}`),
            h('p', { 'data-role': 'issued-password' }, `Temporary password: ${secret}`),
            h(
                'button',
                {
                    type: 'button',
                    'data-action': 'dismiss-credentials',
                    onclick: () => {
                        secret = null; // drop the only client-side copy
                        clear(modalHost);
                    },
                },
                'I have recorded it',
            ),
        );
        modalHost.append(modal);
    }

    function actionButton(label: string, action: string, handler: () => Promise<void>): HTMLElement {
        return h(
            'button',
            {
                type: 'button',
                'data-action': action,
                onclick: () => {
                    void handler()
                        .then(() => {
                            say('');
                            return refresh();
                        })
                        .catch((err) => say(notAvailable(err)));
                },
            },
            label,
        );
    }

    function timeline(record: PatientRecord): HTMLElement {
        const items = h('ol', { 'data-role': 'timeline' });
        items.append(h('li', {}, `Registered ${record.created_at}`));
        for (const assessment of record.assessments) {
            items.append(
                h(
                    'li',
                    {},
                    `${assessment.kind} ${assessment.overall} at ${assessment.assessed_at}`,
                ),
            );
        }
        for (const [name, form] of Object.entries(record.forms)) {
            if (form.last_edited_at) {
                items.append(h('li', {}, `${name} ${form.status} at ${form.last_edited_at}`));
            }
        }
        for (const specimen of record.specimens) {
            items.append(h('li', {}, `Specimen ${specimen.kind} at ${specimen.collected_at}`));
        }
        items.append(
            h('li', {}, `Now ${record.workflow_state} (v${record.state_version}), updated ${record.updated_at}`),
        );
        return items;
    }

    function drawDetail(): void {
        clear(detailPane);
        if (!selected) {
            detailPane.append(h('p', { 'data-role': 'no-selection' }, 'Open a patient to act on it.'));
            return;
        }
        const record = selected;
        const actions = h('div', { 'data-role': 'actions' });
        actions.append(
            actionButton('Record consultation', 'consultation', async () => {
                await api.recordConsultation(record.patient_id, record.state_version);
            }),
        );
        const validationHost = h('div', { 'data-role': 'validation-host' });
        actions.append(
            h(
                'button',
                {
                    type: 'button',
                    'data-action': 'validation',
                    onclick: () => {
                        clear(validationHost);
                        validationHost.append(
                            h('h4', {}, 'Physician validation findings'),
                            inputsForm((inputs) => {
                                void api
                                    .physicianValidate(record.patient_id, inputs, record.state_version)
                                    .then(() => {
                                        clear(validationHost);
                                        say('');
                                        return refresh();
                                    })
                                    .catch((err) => say(notAvailable(err)));
                            }, 'Save validation'),
                        );
                    },
                },
                'Enter validation',
            ),
        );
        const credentialsHost = h('div', { 'data-role': 'credentials-host' });
        actions.append(
            h(
                'button',
                {
                    type: 'button',
                    'data-action': 'credentials',
                    onclick: () => {
                        clear(credentialsHost);
                        const form = h(
                            'form',
                            {},
                            h('label', {}, 'Portal username for the patient ', h('input', { name: 'username' })),
                            h('button', { type: 'submit' }, 'Create account'),
                        );
                        form.addEventListener('submit', (event) => {
                            event.preventDefault();
                            const username = String(new FormData(form).get('username') ?? '');
                            void api
                                .issueCredentials(record.patient_id, username, record.state_version)
                                .then((result) => {
                                    clear(credentialsHost);
                                    showOneTimePassword(result.username, result.temporary_password);
                                    say('');
                                    return refresh();
                                })
                                .catch((err) => say(notAvailable(err)));
                        });
                        credentialsHost.append(form);
                    },
                },
                'Issue credentials',
            ),
        );
        actions.append(
            actionButton('Register urine specimen', 'specimen-urine', async () => {
                await api.registerSpecimen(record.patient_id, 'URINE', record.state_version);
            }),
            actionButton('Register serum specimen', 'specimen-serum', async () => {
                await api.registerSpecimen(record.patient_id, 'SERUM', record.state_version);
            }),
        );
        const withdrawHost = h('div', { 'data-role': 'withdraw-host' });
        actions.append(
            h(
                'button',
                {
                    type: 'button',
                    'data-action': 'withdraw',
                    onclick: () => {
                        clear(withdrawHost);
                        const form = h(
                            'form',
                            {},
                            h('label', {}, 'Reason ', h('input', { name: 'reason' })),
                            h('button', { type: 'submit' }, 'Confirm withdrawal'),
                        );
                        form.addEventListener('submit', (event) => {
                            event.preventDefault();
                            const reason = String(new FormData(form).get('reason') ?? '');
                            void api
                                .withdraw(record.patient_id, reason, record.state_version)
                                .then(() => {
                                    clear(withdrawHost);
                                    say('');
                                    return refresh();
                                })
                                .catch((err) => say(notAvailable(err)));
                        });
                        withdrawHost.append(form);
                    },
                },
                'Withdraw patient',
            ),
        );
        detailPane.append(
            h('h2', {}, `Patient ${record.patient_id}`),
            h(
                'p',
                { 'data-role': 'detail-state' },
                `State ${record.workflow_state}, version ${record.state_version}, site ${record.site_id}`,
            ),
            h('h3', {}, 'Status timeline'),
            timeline(record),
            h('h3', {}, 'Actions'),
            actions,
            validationHost,
            credentialsHost,
            withdrawHost,
        );
    }

    function drawRegisterPane(): void {
        clear(registerPane);
        const host = h('div', { 'data-role': 'register-host' });
        registerPane.append(
            h(
                'button',
                {
                    type: 'button',
                    'data-action': 'register-prospect',
                    onclick: () => {
                        clear(host);
                        host.append(
                            h('h3', {}, 'Register a prospect (self-screen results)'),
                            inputsForm((inputs) => {
                                if (!account.site_id) return;
                                void api
                                    .registerProspect(account.site_id, inputs)
                                    .then(() => {
                                        clear(host);
                                        say('');
                                        return refresh();
                                    })
                                    .catch((err) => say(notAvailable(err)));
                            }, 'Register prospect'),
                        );
                    },
                },
                'Register new prospect',
            ),
            host,
        );
    }

    root.append(
        h('h1', {}, `Study dashboard — ${account.username}`),
        messages,
        registerPane,
        listPane,
        detailPane,
        modalHost,
    );
    drawRegisterPane();
    void refresh();
}
